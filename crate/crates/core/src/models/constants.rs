use crate::error::{Error, Result};

/// Geometry, mass, inertia, flow and sensor-offset constants of one flight
/// record. Entries that a case does not use are `None`.
///
/// Units follow the source record: the two longitudinal cases are in
/// ft/slug/lbf, the lateral case is SI.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConstants {
    pub cbar: Option<f64>,
    pub span: Option<f64>,
    pub area: f64,
    pub mass: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    pub izx: f64,
    pub qbar: Option<f64>,
    pub velocity: Option<f64>,
    pub gravity: f64,
    pub k_alpha: f64,
    pub k_alpha_x_alpha: f64,
    pub x_an: f64,
    pub z_ax: f64,
    pub k_beta_z_beta: f64,
    pub k_beta_x_beta: f64,
    pub z_ay: f64,
    pub x_ay: f64,
}

impl Default for ModelConstants {
    fn default() -> Self {
        Self {
            cbar: None,
            span: None,
            area: 0.0,
            mass: 0.0,
            ixx: 0.0,
            iyy: 0.0,
            izz: 0.0,
            izx: 0.0,
            qbar: None,
            velocity: None,
            gravity: 0.0,
            k_alpha: 1.0,
            k_alpha_x_alpha: 0.0,
            x_an: 0.0,
            z_ax: 0.0,
            k_beta_z_beta: 0.0,
            k_beta_x_beta: 0.0,
            z_ay: 0.0,
            x_ay: 0.0,
        }
    }
}

impl ModelConstants {
    /// Longitudinal record of the first case (ft, slug, lbf).
    pub fn case1() -> Self {
        Self {
            cbar: Some(5.58),
            area: 184.0,
            mass: 172.667,
            ixx: 4142.9,
            iyy: 3922.4,
            izz: 7642.5,
            gravity: 32.2,
            velocity: Some(403.1),
            qbar: Some(83.08),
            k_alpha_x_alpha: -0.0279,
            x_an: 0.101,
            z_ax: -1.17,
            ..Self::default()
        }
    }

    /// Rolling-manoeuvre longitudinal record. Dynamic pressure and airspeed
    /// are not part of the table: airspeed comes from the measured `V_m`
    /// channel and dynamic pressure must be supplied.
    pub fn case2() -> Self {
        Self {
            cbar: Some(5.58),
            area: 184.0,
            mass: 196.0,
            ixx: 6892.7,
            iyy: 3953.2,
            izz: 10416.4,
            gravity: 32.2,
            k_alpha: 1.0,
            k_alpha_x_alpha: -0.0279,
            x_an: 0.101,
            ..Self::default()
        }
    }

    /// Lateral record (SI units).
    pub fn case3() -> Self {
        Self {
            qbar: Some(865.3),
            area: 9.3,
            mass: 387.7,
            ixx: 314.0,
            iyy: 488.0,
            izz: 698.0,
            izx: 69.0,
            velocity: Some(39.41),
            gravity: 9.81,
            span: Some(6.81),
            k_beta_z_beta: 0.305,
            k_beta_x_beta: 2.73,
            z_ay: -0.098,
            x_ay: 0.651,
            ..Self::default()
        }
    }

    /// Override one constant by its configuration key.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "cbar" => self.cbar = Some(value),
            "b" | "span" => self.span = Some(value),
            "S" | "area" => self.area = value,
            "m" | "mass" => self.mass = value,
            "Ixx" | "ixx" => self.ixx = value,
            "Iyy" | "iyy" => self.iyy = value,
            "Izz" | "izz" => self.izz = value,
            "Izx" | "izx" => self.izx = value,
            "qbar" => self.qbar = Some(value),
            "V" | "velocity" => self.velocity = Some(value),
            "g" | "gravity" => self.gravity = value,
            "K_alpha" | "k_alpha" => self.k_alpha = value,
            "K_alpha_x_alpha" | "k_alpha_x_alpha" => self.k_alpha_x_alpha = value,
            "x_an" => self.x_an = value,
            "z_ax" => self.z_ax = value,
            "K_beta_z_beta" | "k_beta_z_beta" => self.k_beta_z_beta = value,
            "K_beta_x_beta" | "k_beta_x_beta" => self.k_beta_x_beta = value,
            "z_ay" => self.z_ay = value,
            "x_ay" => self.x_ay = value,
            _ => return Err(Error::Config(format!("unknown model constant `{key}`"))),
        }
        Ok(())
    }

    pub fn require(&self, value: Option<f64>, name: &str) -> Result<f64> {
        value.ok_or_else(|| Error::Config(format!("missing model constant `{name}`")))
    }

    /// Checks shared by all cases.
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Constants(format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.iyy > 0.0) {
            return Err(Error::Constants(format!("Iyy must be positive, got {}", self.iyy)));
        }
        if !(self.gravity > 0.0) {
            return Err(Error::Constants("g must be positive".into()));
        }
        if let Some(v) = self.velocity {
            if !(v > 0.0) {
                return Err(Error::Constants(format!("V must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Ixx·Izz − Izx² > 0, needed to solve the coupled roll/yaw equations.
    pub fn validate_lateral_inertia(&self) -> Result<()> {
        let det = self.ixx * self.izz - self.izx * self.izx;
        if !(self.ixx > 0.0 && self.izz > 0.0 && det > 0.0) {
            return Err(Error::Constants(format!(
                "Ixx·Izz − Izx² = {det} must be positive"
            )));
        }
        Ok(())
    }
}
