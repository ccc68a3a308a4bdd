use serde::{Deserialize, Serialize};

/// Link between the discrete hazard and the linear predictor.
///
/// `Logit` gives the proportional continuation ratio model, `Gompertz`
/// (complementary log-log) the grouped proportional hazards model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Logit,
    Gompertz,
}

impl Link {
    /// `g(λ)`.
    pub fn link(self, lambda: f64) -> f64 {
        match self {
            Link::Logit => (lambda / (1.0 - lambda)).ln(),
            Link::Gompertz => (-(-lambda).ln_1p()).ln(),
        }
    }

    /// `h(η) = g⁻¹(η)`.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Link::Gompertz => -(-eta.exp()).exp_m1(),
        }
    }

    /// `h'(η)`.
    pub fn derivative(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let mu = self.inverse(eta);
                mu * (1.0 - mu)
            }
            Link::Gompertz => (eta - eta.exp()).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Gompertz => "gompertz",
        }
    }
}

impl std::str::FromStr for Link {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logit" | "logistic" => Ok(Link::Logit),
            "gompertz" | "cloglog" => Ok(Link::Gompertz),
            other => Err(format!("unknown link '{other}' (expected logit or gompertz)")),
        }
    }
}
