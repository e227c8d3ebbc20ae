//! Constitutive laws and model constants: scaffold degradation σ(t), the
//! composite elasticity tensor C(ρ, σ, b), the diffusivity D(ρ) and the
//! mechanical stimulus S(ε).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance by which nodal densities may leave `[c_P, C_P]` before the
/// constitutive laws refuse them. Finite-difference probes step slightly past
/// the box; the optimizer itself always clamps back inside.
pub const BOX_SLACK: f64 = 1e-3;

/// Relative void stiffness: `E_min = VOID_FRACTION * E_scaffold`.
pub const VOID_FRACTION: f64 = 1e-3;

const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum StimulusLaw {
    /// Frobenius norm of the strain.
    Frobenius,
    /// Trapezoid window on the Frobenius norm: 1 on `[lo, hi]`, linear ramps of
    /// width `width` on either side, 0 beyond.
    Bandpass { lo: f64, hi: f64, width: f64 },
}

/// Model constants. Rates are per week, moduli in MPa, diffusivity in mm²/week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub k1: f64,
    pub k2: [f64; 2],
    pub k3: [f64; 2],
    pub k4: f64,
    pub k6: f64,
    pub k7: f64,
    pub e_scaffold: f64,
    pub e_bone: f64,
    pub e_fixture: f64,
    pub nu: f64,
    pub d0: f64,
    pub stimulus: StimulusLaw,
    pub c_p: f64,
    #[serde(rename = "cap_p")]
    pub cap_p: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            k1: 0.05,
            k2: [1.0, 1.0],
            k3: [1.0, 1.0],
            k4: 0.1,
            k6: 0.5,
            k7: 1.0,
            e_scaffold: 100.0,
            e_bone: 1000.0,
            e_fixture: 100_000.0,
            nu: 0.3,
            d0: 1.0,
            stimulus: StimulusLaw::Frobenius,
            c_p: 0.05,
            cap_p: 0.7,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("k1", self.k1),
            ("k2_1", self.k2[0]),
            ("k2_2", self.k2[1]),
            ("k3_1", self.k3[0]),
            ("k3_2", self.k3[1]),
            ("k4", self.k4),
            ("k6", self.k6),
            ("k7", self.k7),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    quantity: name,
                    value: v,
                    range: "[0, inf)".into(),
                });
            }
        }
        for (name, v) in [
            ("e_scaffold", self.e_scaffold),
            ("e_bone", self.e_bone),
            ("e_fixture", self.e_fixture),
            ("d0", self.d0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    quantity: name,
                    value: v,
                    range: "(0, inf)".into(),
                });
            }
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::Domain {
                quantity: "nu",
                value: self.nu,
                range: "[0, 0.5)".into(),
            });
        }
        if !(self.c_p > 0.0 && self.c_p <= self.cap_p && self.cap_p < 1.0) {
            return Err(Error::Domain {
                quantity: "c_p",
                value: self.c_p,
                range: format!("(0, C_P = {}] with C_P < 1", self.cap_p),
            });
        }
        if let StimulusLaw::Bandpass { lo, hi, width } = self.stimulus {
            if !(width > 0.0 && lo <= hi && lo >= 0.0) {
                return Err(Error::Domain {
                    quantity: "bandpass width",
                    value: width,
                    range: "width > 0 and 0 <= lo <= hi".into(),
                });
            }
        }
        Ok(())
    }

    pub fn e_min(&self) -> f64 {
        VOID_FRACTION * self.e_scaffold
    }

    /// Effective Young modulus of the scaffold/bone composite (MPa).
    pub fn young_modulus(&self, rho: f64, sigma: f64, b: f64) -> Result<f64> {
        check_range("rho", rho, 0.0, 1.0)?;
        if !(sigma > 0.0) {
            return Err(Error::Domain {
                quantity: "sigma",
                value: sigma,
                range: "(0, 1]".into(),
            });
        }
        check_range("sigma", sigma, 0.0, 1.0)?;
        check_range("b", b, 0.0, 1.0 - rho)?;
        Ok(self.e_min() + self.e_scaffold * rho * sigma + self.e_bone * b)
    }

    /// C(ρ, σ, b): affine mixture of void floor, degrading scaffold and bone.
    pub fn elastic_tensor(&self, rho: f64, sigma: f64, b: f64) -> Result<IsotropicTensor> {
        Ok(IsotropicTensor::from_young(
            self.young_modulus(rho, sigma, b)?,
            self.nu,
        ))
    }

    /// D(ρ) = D0 (1 − ρ).
    pub fn diffusivity(&self, rho: f64) -> Result<f64> {
        check_range("rho", rho, self.c_p - BOX_SLACK, self.cap_p + BOX_SLACK)?;
        Ok(self.d0 * (1.0 - rho))
    }

    /// Diffusivity assigned to FIXTURE elements, independent of ρ.
    pub fn fixture_diffusivity(&self) -> f64 {
        self.d0 * (1.0 - self.cap_p)
    }

    pub fn stimulus(&self, eps: &[[f64; 3]; 3]) -> Result<f64> {
        stimulus(eps, self.stimulus)
    }
}

fn check_range(quantity: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && value >= lo - DOMAIN_TOL && value <= hi + DOMAIN_TOL {
        Ok(())
    } else {
        Err(Error::Domain {
            quantity,
            value,
            range: format!("[{lo}, {hi}]"),
        })
    }
}

/// σ(t) = exp(−k1 t), the remaining relative molecular mass of the scaffold.
pub fn sigma(t: f64, k1: f64) -> f64 {
    (-k1 * t).exp()
}

/// Isotropic elasticity tensor in Lamé form, `C ε = λ tr(ε) I + 2 μ ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicTensor {
    pub lambda: f64,
    pub mu: f64,
}

impl IsotropicTensor {
    pub fn from_young(e: f64, nu: f64) -> Self {
        Self {
            lambda: e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
            mu: e / (2.0 * (1.0 + nu)),
        }
    }

    pub fn stress(&self, eps: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let tr = eps[0][0] + eps[1][1] + eps[2][2];
        let mut s = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = 2.0 * self.mu * eps[i][j];
            }
            s[i][i] += self.lambda * tr;
        }
        s
    }

    /// `C a : b`.
    pub fn contract(&self, a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
        let s = self.stress(a);
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += s[i][j] * b[i][j];
            }
        }
        acc
    }

    /// Largest `c` with `C M : M >= c |M|²` for all symmetric `M` (needs λ ≥ 0).
    pub fn ellipticity_constant(&self) -> f64 {
        2.0 * self.mu + 3.0 * self.lambda.min(0.0)
    }
}

/// Mechanical stimulus of a symmetric strain tensor.
pub fn stimulus(eps: &[[f64; 3]; 3], law: StimulusLaw) -> Result<f64> {
    let n = frobenius_checked(eps)?;
    Ok(match law {
        StimulusLaw::Frobenius => n,
        StimulusLaw::Bandpass { lo, hi, width } => window(n, lo, hi, width).0,
    })
}

/// dS/dε as a symmetric 3×3 tensor. Zero at ε = 0 and on flat window parts;
/// at window kinks the left derivative is taken.
pub fn stimulus_derivative(eps: &[[f64; 3]; 3], law: StimulusLaw) -> Result<[[f64; 3]; 3]> {
    let n = frobenius_checked(eps)?;
    if n == 0.0 {
        return Ok([[0.0; 3]; 3]);
    }
    let slope = match law {
        StimulusLaw::Frobenius => 1.0,
        StimulusLaw::Bandpass { lo, hi, width } => window(n, lo, hi, width).1,
    };
    let mut d = *eps;
    d.iter_mut().flatten().for_each(|v| *v *= slope / n);
    Ok(d)
}

fn frobenius_checked(eps: &[[f64; 3]; 3]) -> Result<f64> {
    let n = eps.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let asym = (eps[0][1] - eps[1][0])
        .abs()
        .max((eps[0][2] - eps[2][0]).abs())
        .max((eps[1][2] - eps[2][1]).abs());
    if !n.is_finite() {
        return Err(Error::NonFinite("strain"));
    }
    if asym > 1e-12 * n.max(1e-300) && asym > 1e-300 {
        return Err(Error::NonSymmetricStrain(asym));
    }
    Ok(n)
}

/// Trapezoid window value and slope at `s`.
fn window(s: f64, lo: f64, hi: f64, width: f64) -> (f64, f64) {
    if s <= lo - width || s > hi + width {
        (0.0, 0.0)
    } else if s <= lo {
        ((s - (lo - width)) / width, 1.0 / width)
    } else if s <= hi {
        (1.0, 0.0)
    } else {
        ((hi + width - s) / width, -1.0 / width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diag(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
        [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]
    }

    #[test]
    fn sigma_values() {
        assert_eq!(sigma(0.0, 0.3), 1.0);
        assert_eq!(sigma(17.0, 0.0), 1.0);
        assert!((sigma(1.0, std::f64::consts::LN_2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn young_modulus_mixture() {
        let p = MaterialParams {
            e_scaffold: 100.0,
            e_bone: 1000.0,
            ..Default::default()
        };
        assert_eq!(p.young_modulus(0.0, 1.0, 0.0).unwrap(), p.e_min());
        assert!((p.young_modulus(1.0, 1.0, 0.0).unwrap() - (p.e_min() + 100.0)).abs() < 1e-12);
        assert!((p.young_modulus(0.5, 0.5, 0.25).unwrap() - 275.1).abs() < 1e-12);
        assert!(p.young_modulus(0.6, 1.0, 0.5).is_err());
        assert!(p.young_modulus(0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn diffusivity_law() {
        let p = MaterialParams {
            d0: 2.0,
            ..Default::default()
        };
        assert!((p.diffusivity(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((p.diffusivity(p.cap_p).unwrap() - 2.0 * (1.0 - p.cap_p)).abs() < 1e-15);
        assert!(p.diffusivity(0.3).unwrap() > p.diffusivity(0.4).unwrap());
        assert!(p.diffusivity(0.95).is_err());
    }

    #[test]
    fn stimulus_examples() {
        let band = StimulusLaw::Bandpass {
            lo: 0.01,
            hi: 0.03,
            width: 0.005,
        };
        let zero = [[0.0; 3]; 3];
        assert_eq!(stimulus(&zero, StimulusLaw::Frobenius).unwrap(), 0.0);
        assert_eq!(stimulus(&zero, band).unwrap(), 0.0);
        assert!(
            (stimulus(&diag(0.01, 0.0, 0.0), StimulusLaw::Frobenius).unwrap() - 0.01).abs() < 1e-18
        );
        assert!((stimulus(&diag(0.02, 0.0, 0.0), band).unwrap() - 1.0).abs() < 1e-15);
        assert!((stimulus(&diag(0.0075, 0.0, 0.0), band).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(stimulus(&diag(0.04, 0.0, 0.0), band).unwrap(), 0.0);
        let mut asym = diag(0.01, 0.0, 0.0);
        asym[0][1] = 0.001;
        assert!(matches!(
            stimulus(&asym, StimulusLaw::Frobenius),
            Err(Error::NonSymmetricStrain(_))
        ));
    }

    #[test]
    fn default_params_are_valid() {
        MaterialParams::default().validate().unwrap();
        let bad = MaterialParams {
            c_p: 0.8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MaterialParams {
            nu: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn sym(v: [f64; 6]) -> [[f64; 3]; 3] {
        [[v[0], v[3], v[4]], [v[3], v[1], v[5]], [v[4], v[5], v[2]]]
    }

    fn fro(a: &[[f64; 3]; 3]) -> f64 {
        a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    proptest! {
        #[test]
        fn ellipticity_and_bounds(
            m in prop::array::uniform6(-1.0f64..1.0),
            rho in 0.0f64..1.0, sigma in 0.01f64..1.0, bfrac in 0.0f64..1.0,
        ) {
            let p = MaterialParams::default();
            let b = bfrac * (1.0 - rho);
            let c = p.elastic_tensor(rho, sigma, b).unwrap();
            let mm = sym(m);
            let floor = IsotropicTensor::from_young(p.e_min(), p.nu).ellipticity_constant();
            let n2 = fro(&mm).powi(2);
            prop_assert!(c.contract(&mm, &mm) >= floor * n2 * (1.0 - 1e-12));
            let e = p.young_modulus(rho, sigma, b).unwrap();
            prop_assert!(e <= p.e_min() + p.e_scaffold + p.e_bone);
        }

        #[test]
        fn monotone_in_each_argument(rho in 0.0f64..0.5, sigma in 0.01f64..0.9, b in 0.0f64..0.4, d in 0.001f64..0.05) {
            let p = MaterialParams::default();
            let e0 = p.young_modulus(rho, sigma, b).unwrap();
            prop_assert!(p.young_modulus(rho + d, sigma, b).unwrap() > e0);
            prop_assert!(p.young_modulus(rho, sigma + d, b).unwrap() > e0);
            prop_assert!(p.young_modulus(rho, sigma, b + d).unwrap() > e0);
        }

        #[test]
        fn lipschitz_in_bone_fraction(rho in 0.0f64..0.6, sigma in 0.01f64..1.0, b1 in 0.0f64..0.4, b2 in 0.0f64..0.4) {
            // The operator norm of C for an isotropic tensor is 3λ + 2μ (volumetric mode).
            let p = MaterialParams::default();
            let c1 = p.elastic_tensor(rho, sigma, b1).unwrap();
            let c2 = p.elastic_tensor(rho, sigma, b2).unwrap();
            let op_diff = (3.0 * (c1.lambda - c2.lambda) + 2.0 * (c1.mu - c2.mu)).abs()
                .max(2.0 * (c1.mu - c2.mu).abs());
            let unit = IsotropicTensor::from_young(1.0, p.nu);
            let factor = 3.0 * unit.lambda + 2.0 * unit.mu;
            prop_assert!(op_diff <= p.e_bone * (b1 - b2).abs() * factor * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn stimulus_is_lipschitz(a in prop::array::uniform6(-0.05f64..0.05), b in prop::array::uniform6(-0.05f64..0.05)) {
            let (ma, mb) = (sym(a), sym(b));
            let mut diff = ma;
            for i in 0..3 { for j in 0..3 { diff[i][j] -= mb[i][j]; } }
            let dist = fro(&diff);
            let fa = stimulus(&ma, StimulusLaw::Frobenius).unwrap();
            let fb = stimulus(&mb, StimulusLaw::Frobenius).unwrap();
            prop_assert!((fa - fb).abs() <= dist * (1.0 + 1e-12) + 1e-15);
            let w = 0.005;
            let band = StimulusLaw::Bandpass { lo: 0.01, hi: 0.03, width: w };
            let ga = stimulus(&ma, band).unwrap();
            let gb = stimulus(&mb, band).unwrap();
            prop_assert!((ga - gb).abs() <= dist / w * (1.0 + 1e-12) + 1e-15);
            // linear growth bound S(A) <= |A| + 1
            prop_assert!(ga <= fro(&ma) + 1.0);
        }
    }
}
