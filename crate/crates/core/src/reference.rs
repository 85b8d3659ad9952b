//! Published reference values for the worked designs.
//!
//! Numbers are stored exactly as printed, together with the number of
//! decimals shown, so comparisons can be made at printed precision.

/// Nominal levels used throughout the reference designs.
pub const ALPHA: f64 = 0.05;
pub const BETA: f64 = 0.1;
pub const THETA0: f64 = 0.065;

/// `(θ₁ or δ label, N*, k*)` for the reference designs at `θ₀ = 0.065`.
pub struct DesignRow {
    pub theta1: f64,
    pub delta: f64,
    pub n_star: u64,
    pub k_star: u64,
}

pub const DESIGNS: [DesignRow; 6] = [
    DesignRow { theta1: 0.0715, delta: 0.1, n_star: 12811, k_star: 878 },
    DesignRow { theta1: 0.078, delta: 0.2, n_star: 3321, k_star: 239 },
    DesignRow { theta1: 0.0975, delta: 0.5, n_star: 584, k_star: 47 },
    DesignRow { theta1: 0.08125, delta: 0.25, n_star: 2162, k_star: 159 },
    DesignRow { theta1: 0.06825, delta: 0.05, n_star: 50269, k_star: 3358 },
    DesignRow { theta1: 0.06565, delta: 0.01, n_star: 1236886, k_star: 80848 },
];

/// Stopping-time characteristics on the `(12811, 878)` design.
pub struct StoppingRow {
    pub theta: f64,
    pub asn: f64,
    pub sd: f64,
    pub cv: f64,
}

pub const STOPPING_TIME: [StoppingRow; 7] = [
    StoppingRow { theta: 0.065, asn: 12802.0, sd: 52.5240, cv: 0.0041 },
    StoppingRow { theta: 0.0715, asn: 12274.0, sd: 363.9850, cv: 0.0297 },
    StoppingRow { theta: 0.1, asn: 8790.0, sd: 281.2650, cv: 0.0320 },
    StoppingRow { theta: 0.2, asn: 4395.0, sd: 132.5896, cv: 0.0302 },
    StoppingRow { theta: 0.3, asn: 2930.0, sd: 82.6841, cv: 0.0282 },
    StoppingRow { theta: 0.4, asn: 2198.0, sd: 57.4130, cv: 0.0261 },
    StoppingRow { theta: 0.5, asn: 1758.0, sd: 41.9285, cv: 0.0239 },
];
pub const CV_DECIMALS: i32 = 4;

/// Estimator moments on the `(12811, 878)` design.
pub struct EstimatorRow {
    pub theta: f64,
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
}

pub const ESTIMATOR: [EstimatorRow; 7] = [
    EstimatorRow { theta: 0.065, mean: 0.0647, second_moment: 0.0042, variance: 2.0804e-05 },
    EstimatorRow { theta: 0.0715, mean: 0.0712, second_moment: 0.0051, variance: 3.5520e-05 },
    EstimatorRow { theta: 0.1, mean: 0.1001, second_moment: 0.0100, variance: 1.0279e-05 },
    EstimatorRow { theta: 0.2, mean: 0.2002, second_moment: 0.0401, variance: 3.6521e-05 },
    EstimatorRow { theta: 0.3, mean: 0.3002, second_moment: 0.0902, variance: 7.1852e-05 },
    EstimatorRow { theta: 0.4, mean: 0.4003, second_moment: 0.1603, variance: 1.0941e-04 },
    EstimatorRow { theta: 0.5, mean: 0.5003, second_moment: 0.2504, variance: 1.4237e-04 },
];
pub const ESTIMATOR_MEAN_DECIMALS: i32 = 4;

/// Estimator mean and variance along the δ ladder `{0.1, 0.05, 0.01}`.
pub struct LadderRow {
    pub theta: f64,
    pub mean: [f64; 3],
    pub variance: [f64; 3],
}

pub const LADDER_DELTAS: [f64; 3] = [0.1, 0.05, 0.01];
pub const LADDER_DESIGNS: [(u64, u64); 3] = [(12811, 878), (50269, 3358), (1236886, 80848)];
pub const LADDER_MEAN_DECIMALS: i32 = 6;

pub const LADDER: [LadderRow; 6] = [
    LadderRow { theta: 0.065, mean: [0.064742, 0.064875, 0.064975], variance: [2.0804e-05, 9.1591e-06, 1.6428e-06] },
    LadderRow { theta: 0.1, mean: [0.100103, 0.100027, 0.100001], variance: [1.0279e-05, 2.6821e-06, 1.1132e-07] },
    LadderRow { theta: 0.2, mean: [0.200182, 0.200048, 0.200002], variance: [3.6521e-05, 9.5346e-06, 3.9581e-07] },
    LadderRow { theta: 0.3, mean: [0.300239, 0.300063, 0.300003], variance: [7.1852e-05, 1.8768e-05, 7.7925e-07] },
    LadderRow { theta: 0.4, mean: [0.400273, 0.400072, 0.400003], variance: [1.0941e-04, 2.8594e-05, 1.1874e-06] },
    LadderRow { theta: 0.5, mean: [0.500284, 0.500074, 0.500003], variance: [1.4237e-04, 3.7225e-05, 1.5461e-06] },
];

/// Simulated 95% interval coverage, `(θ, δ=0.2 design, δ=0.1 design)`.
pub const COVERAGE_DESIGNS: [(u64, u64); 2] = [(3321, 239), (12811, 878)];
pub const COVERAGE: [(f64, [f64; 2]); 4] = [
    (0.05, [0.9455, 0.9485]),
    (0.065, [0.9468, 0.9493]),
    (0.08, [0.9485, 0.9522]),
    (0.2, [0.9501, 0.9495]),
];

/// The surveillance example.
pub mod surveillance {
    /// Observed doses and side effects.
    pub const DOSES: u64 = 19821;
    pub const EVENTS: u64 = 53;

    /// Scenario (i): `N*` fixed by the data.
    pub const I_THETA0: f64 = 0.005;
    pub const I_THETA1: f64 = 0.0065;
    pub const I_K_STAR: u64 = 115;
    pub const I_ALPHA: f64 = 0.0494;
    pub const I_BETA: f64 = 0.1192;

    /// Scenario (ii): `k*` fixed, `N*` solved for.
    pub const II_THETA0: f64 = 0.002;
    pub const II_THETA1: f64 = 0.003;
    pub const II_K_STAR: u64 = 52;
    pub const II_N_STAR: u64 = 20934;
    pub const II_ALPHA: f64 = 0.0500;
    pub const II_BETA: f64 = 0.0965;

    pub const THETA_HAT: f64 = 0.0027;
    pub const CI: (f64, f64) = (0.001955, 0.003393);
}

/// `|computed − printed|` is within one unit of the last printed decimal.
pub fn within_last_digit(computed: f64, printed: f64, decimals: i32) -> bool {
    (computed - printed).abs() <= 10f64.powi(-decimals) * (1.0 + 1e-9)
}

/// Round half away from zero to `decimals` places.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}
