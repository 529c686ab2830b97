/// Quintic `d(t)` fixed by position, velocity and acceleration at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticPoly {
    pub coeffs: [f64; 6],
}

impl QuinticPoly {
    pub fn new(start: (f64, f64, f64), end: (f64, f64, f64), t: f64) -> Self {
        let (p0, v0, a0) = start;
        let (p1, v1, a1) = end;
        let c2 = 0.5 * a0;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        // Residuals after the start terms, solved in closed form for c3..c5.
        let r0 = p1 - (p0 + v0 * t + c2 * t2);
        let r1 = v1 - (v0 + 2.0 * c2 * t);
        let r2 = a1 - 2.0 * c2;
        let c3 = (10.0 * r0 - 4.0 * r1 * t + 0.5 * r2 * t2) / t3;
        let c4 = (-15.0 * r0 + 7.0 * r1 * t - r2 * t2) / t4;
        let c5 = (6.0 * r0 - 3.0 * r1 * t + 0.5 * r2 * t2) / t5;
        Self { coeffs: [p0, v0, c2, c3, c4, c5] }
    }

    pub fn pos(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))))
    }

    pub fn vel(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])))
    }

    pub fn acc(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]))
    }

    pub fn jerk(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        6.0 * c[3] + t * (24.0 * c[4] + t * 60.0 * c[5])
    }
}

/// Velocity-keeping quartic `s(t)`: start position, velocity and
/// acceleration, end velocity and acceleration, free end position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticPoly {
    pub coeffs: [f64; 5],
}

impl QuarticPoly {
    pub fn new(start: (f64, f64, f64), end: (f64, f64), t: f64) -> Self {
        let (p0, v0, a0) = start;
        let (v1, a1) = end;
        let c2 = 0.5 * a0;
        let (t2, t3) = (t * t, t * t * t);
        let r1 = v1 - (v0 + 2.0 * c2 * t);
        let r2 = a1 - 2.0 * c2;
        let c3 = (3.0 * r1 - r2 * t) / (3.0 * t2);
        let c4 = (-2.0 * r1 + r2 * t) / (4.0 * t3);
        Self { coeffs: [p0, v0, c2, c3, c4] }
    }

    pub fn pos(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])))
    }

    pub fn vel(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * 4.0 * c[4]))
    }

    pub fn acc(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        2.0 * c[2] + t * (6.0 * c[3] + t * 12.0 * c[4])
    }

    pub fn jerk(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        6.0 * c[3] + t * 24.0 * c[4]
    }
}
