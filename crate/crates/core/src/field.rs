pub type Mat2 = [[f64; 2]; 2];

/// Autonomous planar vector field with an analytic Jacobian.
pub trait VectorField {
    fn eval(&self, y: [f64; 2]) -> [f64; 2];
    fn jacobian(&self, y: [f64; 2]) -> Mat2;
}

/// y' = M (y - y0). Handy for closed-form checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearField {
    pub matrix: Mat2,
    pub center: [f64; 2],
}

impl VectorField for LinearField {
    fn eval(&self, y: [f64; 2]) -> [f64; 2] {
        let d = [y[0] - self.center[0], y[1] - self.center[1]];
        [
            self.matrix[0][0] * d[0] + self.matrix[0][1] * d[1],
            self.matrix[1][0] * d[0] + self.matrix[1][1] * d[1],
        ]
    }

    fn jacobian(&self, _y: [f64; 2]) -> Mat2 {
        self.matrix
    }
}
