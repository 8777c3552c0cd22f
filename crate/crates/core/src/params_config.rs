//! Text-config serialization of parameter sets.
//!
//! A parameter set is one flat `[params]` key–value section; which keys are
//! present depends on the model. Round-trips are exact: formatting uses the
//! shortest decimal that parses back to the identical binary value.

use serde::{Deserialize, Serialize};

use crate::fields::{FieldError, Model, Monomial, NeutralParams, Perturbation};

/// Serde image of the `[params]` section.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub model: String,
    pub a0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    pub a2: f64,
    pub b0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    pub b2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ho_x: Option<Vec<Monomial>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ho_y: Option<Vec<Monomial>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ho_z: Option<Vec<Monomial>>,
}

impl ParamsSection {
    pub fn from_params(p: &NeutralParams) -> Self {
        let model = p.model();
        let three_d = model.dim() == 3;
        let mixed = matches!(model, Model::Model1 | Model::Model3);
        let c_terms = matches!(model, Model::Model2 | Model::Model3);
        let ho = p.higher_order();
        ParamsSection {
            model: model.label().to_string(),
            a0: p.a0(),
            a1: mixed.then(|| p.a1()),
            a2: p.a2(),
            b0: p.b0(),
            b1: mixed.then(|| p.b1()),
            b2: p.b2(),
            c0: c_terms.then(|| p.c0()),
            c2: c_terms.then(|| p.c2()),
            ell: three_d.then(|| p.ell()),
            kappa: (model == Model::TwoD && p.kappa() != 2).then(|| p.kappa()),
            ho_x: ho.filter(|h| !h.x_terms.is_empty()).map(|h| h.x_terms.clone()),
            ho_y: ho.filter(|h| !h.y_terms.is_empty()).map(|h| h.y_terms.clone()),
            ho_z: ho.filter(|h| !h.z_terms.is_empty()).map(|h| h.z_terms.clone()),
        }
    }

    pub fn to_params(&self) -> Result<NeutralParams, FieldError> {
        let model = Model::from_label(&self.model)?;
        let get = |name: &'static str, v: Option<f64>| {
            v.ok_or_else(|| FieldError::Config(format!("{} requires key `{name}`", self.model)))
        };
        let forbid = |name: &'static str, v: Option<f64>| match v {
            Some(value) => Err(FieldError::MustVanish {
                model: model.label(),
                name,
                value,
            }),
            None => Ok(()),
        };
        let mut params = match model {
            Model::TwoD => {
                forbid("a1", self.a1)?;
                forbid("b1", self.b1)?;
                forbid("c0", self.c0)?;
                forbid("c2", self.c2)?;
                forbid("ell", self.ell)?;
                NeutralParams::two_d(self.a0, self.a2, self.b0, self.b2)?
            }
            Model::Model1 => {
                // c-terms must be absent or zero for the skew-product model.
                for (name, v) in [("c0", self.c0), ("c2", self.c2)] {
                    if let Some(value) = v {
                        if value != 0.0 {
                            return Err(FieldError::MustVanish {
                                model: "model1",
                                name,
                                value,
                            });
                        }
                    }
                }
                NeutralParams::model1(
                    self.a0,
                    get("a1", self.a1)?,
                    self.a2,
                    self.b0,
                    get("b1", self.b1)?,
                    self.b2,
                    get("ell", self.ell)?,
                )?
            }
            Model::Model2 => {
                for (name, v) in [("a1", self.a1), ("b1", self.b1)] {
                    if let Some(value) = v {
                        if value != 0.0 {
                            return Err(FieldError::MustVanish {
                                model: "model2",
                                name,
                                value,
                            });
                        }
                    }
                }
                NeutralParams::model2(
                    self.a0,
                    self.a2,
                    self.b0,
                    self.b2,
                    get("c0", self.c0)?,
                    get("c2", self.c2)?,
                    get("ell", self.ell)?,
                )?
            }
            Model::Model3 => NeutralParams::model3(
                self.a0,
                get("a1", self.a1)?,
                self.a2,
                self.b0,
                get("b1", self.b1)?,
                self.b2,
                get("c0", self.c0)?,
                get("c2", self.c2)?,
                get("ell", self.ell)?,
            )?,
        };
        if let Some(kappa) = self.kappa {
            params = params.with_kappa(kappa)?;
        }
        if self.ho_x.is_some() || self.ho_y.is_some() || self.ho_z.is_some() {
            params = params.with_higher_order(Perturbation {
                x_terms: self.ho_x.clone().unwrap_or_default(),
                y_terms: self.ho_y.clone().unwrap_or_default(),
                z_terms: self.ho_z.clone().unwrap_or_default(),
            })?;
        }
        Ok(params)
    }
}

impl NeutralParams {
    /// Renders the parameter set as a `[params]` config section.
    pub fn to_config_string(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            params: &'a ParamsSection,
        }
        let section = ParamsSection::from_params(self);
        toml::to_string(&Doc { params: &section }).expect("params serialize")
    }

    /// Parses a config document containing a `[params]` section.
    pub fn from_config_str(text: &str) -> Result<Self, FieldError> {
        #[derive(Deserialize)]
        struct Doc {
            params: ParamsSection,
        }
        let doc: Doc =
            toml::from_str(text).map_err(|e| FieldError::Config(e.to_string()))?;
        doc.params.to_params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_all_models() {
        let sets = [
            NeutralParams::two_d(15.0, 5.0, 1.0, 3.0).unwrap(),
            NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0).unwrap(),
            NeutralParams::model2(15.0, 6.0, 1.0, 2.0, 1.0, 1.0, 10.0).unwrap(),
            NeutralParams::model3(15.0, 1.0, 6.0, 1.0, 1.0, 2.0, 1.0, 1.0, 10.0).unwrap(),
        ];
        for p in sets {
            let text = p.to_config_string();
            let back = NeutralParams::from_config_str(&text).unwrap();
            assert_eq!(back, p, "round trip failed for\n{text}");
        }
    }

    #[test]
    fn model_constraints_enforced_in_config() {
        let text = "[params]\nmodel = \"model1\"\na0 = 15.0\na1 = 1.0\na2 = 5.0\nb0 = 1.0\nb1 = 1.0\nb2 = 3.0\nc0 = 1.0\nc2 = 0.0\nell = 10.0\n";
        assert!(matches!(
            NeutralParams::from_config_str(text),
            Err(FieldError::MustVanish { name: "c0", .. })
        ));
        let text = "[params]\nmodel = \"model2\"\na0 = 15.0\na2 = 5.0\nb0 = 1.0\nb2 = 3.0\nc0 = 1.0\nc2 = 1.0\n";
        assert!(NeutralParams::from_config_str(text).is_err()); // missing ell
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[params]\nmodel = \"two_d\"\na0 = 15.0\na2 = 5.0\nb0 = 1.0\nb2 = 3.0\nbogus = 1.0\n";
        assert!(NeutralParams::from_config_str(text).is_err());
    }

    #[test]
    fn higher_order_round_trip() {
        let pert = Perturbation {
            x_terms: vec![Monomial {
                c: 0.125,
                px: 2,
                py: 0,
                pz: 2,
            }],
            y_terms: vec![],
            z_terms: vec![Monomial {
                c: -0.0625,
                px: 0,
                py: 2,
                pz: 2,
            }],
        };
        let p = NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0)
            .unwrap()
            .with_higher_order(pert)
            .unwrap();
        let text = p.to_config_string();
        let back = NeutralParams::from_config_str(&text).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        // Exact decimal round-trip: every coefficient survives bit for bit.
        #[test]
        fn coefficients_round_trip_exactly(
            a0 in 0.001f64..100.0, a2 in 0.001f64..100.0,
            b0 in 0.001f64..100.0, b2 in 0.001f64..100.0,
            ell in 0.001f64..100.0,
        ) {
            prop_assume!(a2 * b0 - a0 * b2 != 0.0);
            let p = NeutralParams::model2(a0, a2, b0, b2, 0.5, 0.25, ell).unwrap();
            let back = NeutralParams::from_config_str(&p.to_config_string()).unwrap();
            prop_assert_eq!(back.a0().to_bits(), a0.to_bits());
            prop_assert_eq!(back.a2().to_bits(), a2.to_bits());
            prop_assert_eq!(back.b0().to_bits(), b0.to_bits());
            prop_assert_eq!(back.b2().to_bits(), b2.to_bits());
            prop_assert_eq!(back.ell().to_bits(), ell.to_bits());
        }
    }
}
