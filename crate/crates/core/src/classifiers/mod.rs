//! The classifier zoo and a uniform train/predict entry point.

pub mod expgrad;
pub mod logistic;
pub mod plugin;
pub mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::BiasSetting;
use crate::dataset::{subgroup_stats, LabeledDataset, SubgroupStats};
use crate::error::{Error, Result};
use crate::synthetic::GaussianSubgroupModel;

use expgrad::{train_expgrad, ExpgradConfig, RandomizedClassifier};
use logistic::{train_weighted_lr, LinearScorer, LrConfig, LrFit};
use plugin::{plugin_fair_predict, Constraint, TradeoffParams};
use weights::{corrected_weights, reweigh_weights, CostWeights};

/// Default trade-off sweep for the plug-in and corrected-cost classifiers.
pub const DEFAULT_LAMBDAS: [f64; 7] = [-0.8, -0.4, -0.2, 0.0, 0.2, 0.4, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierId {
    BaseLr,
    Rew,
    PluginSpd,
    PluginEod,
    Thm3Spd,
    Thm3Eod,
    Expgrad,
}

impl ClassifierId {
    pub const ALL: [ClassifierId; 7] = [
        ClassifierId::BaseLr,
        ClassifierId::Rew,
        ClassifierId::PluginSpd,
        ClassifierId::PluginEod,
        ClassifierId::Thm3Spd,
        ClassifierId::Thm3Eod,
        ClassifierId::Expgrad,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierId::BaseLr => "base_lr",
            ClassifierId::Rew => "rew",
            ClassifierId::PluginSpd => "plugin_spd",
            ClassifierId::PluginEod => "plugin_eod",
            ClassifierId::Thm3Spd => "thm3_spd",
            ClassifierId::Thm3Eod => "thm3_eod",
            ClassifierId::Expgrad => "expgrad",
        }
    }

    /// Whether the classifier is swept over a trade-off parameter.
    pub fn uses_lambda(self) -> bool {
        self.constraint().is_some()
    }

    pub fn constraint(self) -> Option<Constraint> {
        match self {
            ClassifierId::PluginSpd | ClassifierId::Thm3Spd => Some(Constraint::Spd),
            ClassifierId::PluginEod | ClassifierId::Thm3Eod => Some(Constraint::Eod),
            _ => None,
        }
    }

    /// Parses a comma-separated list, keeping order and dropping repeats.
    pub fn parse_list(text: &str) -> Result<Vec<ClassifierId>> {
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let id: ClassifierId = part.parse()?;
            if !out.contains(&id) {
                out.push(id);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ClassifierId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownClassifier(s.to_string()))
    }
}

/// Where a plug-in classifier gets its posterior from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EtaSource {
    /// Logistic regression fit on the (biased) training data.
    Fitted(LinearScorer),
    /// The exact posterior of the training distribution of a synthetic model.
    Oracle {
        model: GaussianSubgroupModel,
        setting: BiasSetting,
    },
}

impl EtaSource {
    pub fn eta_all(&self, ds: &LabeledDataset) -> Vec<f64> {
        match self {
            EtaSource::Fitted(s) => s.eta_all(ds),
            EtaSource::Oracle { model, setting } => (0..ds.len())
                .map(|i| model.posterior_eta_under(setting, ds.row(i), ds.groups()[i]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    Linear(LinearScorer),
    Plugin { eta: EtaSource, params: TradeoffParams },
    Randomized(RandomizedClassifier),
}

impl TrainedModel {
    /// Hard predictions; `seed` drives the component draw of mixtures.
    pub fn predict(&self, ds: &LabeledDataset, seed: u64) -> Vec<u8> {
        match self {
            TrainedModel::Linear(s) => s.predict(ds),
            TrainedModel::Plugin { eta, params } => eta
                .eta_all(ds)
                .into_iter()
                .zip(ds.groups())
                .map(|(e, &s)| plugin_fair_predict(e, s, params))
                .collect(),
            TrainedModel::Randomized(r) => r.predict(ds, seed),
        }
    }

    /// Plain-text `key = value` parameter listing.
    pub fn dump(&self, names: &[String]) -> String {
        match self {
            TrainedModel::Linear(s) => format!("kind = linear\n{}", s.dump(names)),
            TrainedModel::Plugin { eta, params } => {
                let mut out = format!(
                    "kind = plugin\nconstraint = {}\nlambda = {}\nbase_rate = {}\ntie_break = {}\n",
                    params.constraint, params.lambda, params.base_rate, params.tie_break
                );
                match eta {
                    EtaSource::Fitted(s) => {
                        out.push_str("eta = fitted\n");
                        out.push_str(&s.dump(names));
                    }
                    EtaSource::Oracle { setting, .. } => out.push_str(&format!(
                        "eta = oracle\nbeta_pos = {}\nbeta_neg = {}\nnu = {}\n",
                        setting.beta_pos, setting.beta_neg, setting.nu
                    )),
                }
                out
            }
            TrainedModel::Randomized(r) => format!("kind = randomized\n{}", r.dump(names)),
        }
    }
}

/// Everything a classifier may look at during training.
#[derive(Debug, Clone)]
pub struct TrainContext<'a> {
    /// The (possibly biased) training set.
    pub train: &'a LabeledDataset,
    /// The bias that produced `train`.
    pub setting: BiasSetting,
    /// Subgroup statistics of the training split before bias injection.
    pub original: &'a SubgroupStats,
    /// Exact synthetic model, used for the plug-in posterior when set.
    pub oracle: Option<&'a GaussianSubgroupModel>,
    pub lr: LrConfig,
    pub expgrad: ExpgradConfig,
    pub tie_break: u8,
}

/// A trained model plus fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: TrainedModel,
    /// False when an optimizer hit its iteration cap or a constraint
    /// tolerance was missed.
    pub converged: bool,
}

fn uniform(ds: &LabeledDataset) -> Vec<f64> {
    vec![1.0; ds.len()]
}

fn linear(fit: LrFit) -> Trained {
    Trained {
        converged: fit.converged,
        model: TrainedModel::Linear(fit.scorer),
    }
}

/// Base logistic regression on the training set, reused by the plug-ins.
pub fn train_base(ctx: &TrainContext<'_>) -> Result<LrFit> {
    train_weighted_lr(ctx.train, &uniform(ctx.train), &ctx.lr)
}

pub fn train_reweighing(ds: &LabeledDataset, lr: &LrConfig) -> Result<LrFit> {
    let w = reweigh_weights(ds)?;
    train_weighted_lr(ds, &w.row_weights(ds), lr)
}

/// Weighted LR with the bias-corrected cost table for `setting`.
pub fn train_thm3_corrected(
    ds: &LabeledDataset,
    setting: &BiasSetting,
    params: &TradeoffParams,
    lr: &LrConfig,
) -> Result<(LrFit, CostWeights)> {
    let table = corrected_weights(setting.beta_pos, setting.beta_neg, params)?;
    let w = table.row_weights(ds);
    if w.iter().all(|&v| v == 0.0) {
        // Every row has zero cost: any constant is optimal; fall back to
        // the unweighted fit so the scorer stays finite.
        return Ok((train_weighted_lr(ds, &uniform(ds), lr)?, table));
    }
    Ok((train_weighted_lr(ds, &w, lr)?, table))
}

/// Trains `id`. `base` is an already-fit base model reused by plug-ins.
pub fn train(
    id: ClassifierId,
    lambda: Option<f64>,
    ctx: &TrainContext<'_>,
    base: Option<&LrFit>,
) -> Result<Trained> {
    match id {
        ClassifierId::BaseLr => match base {
            Some(b) => Ok(linear(b.clone())),
            None => Ok(linear(train_base(ctx)?)),
        },
        ClassifierId::Rew => Ok(linear(train_reweighing(ctx.train, &ctx.lr)?)),
        ClassifierId::PluginSpd | ClassifierId::PluginEod => {
            let constraint = id.constraint().unwrap_or(Constraint::Spd);
            let train_rate = subgroup_stats(ctx.train).base_rate();
            let (eta, converged, rate) = match ctx.oracle {
                Some(model) => {
                    let rate = oracle_base_rate(model, &ctx.setting)?;
                    let src = EtaSource::Oracle {
                        model: model.clone(),
                        setting: ctx.setting,
                    };
                    (src, true, rate)
                }
                None => {
                    let fit = match base {
                        Some(b) => b.clone(),
                        None => train_base(ctx)?,
                    };
                    (EtaSource::Fitted(fit.scorer), fit.converged, train_rate)
                }
            };
            let params = TradeoffParams::new(lambda.unwrap_or(0.0), constraint, rate, ctx.tie_break)?;
            Ok(Trained {
                model: TrainedModel::Plugin { eta, params },
                converged,
            })
        }
        ClassifierId::Thm3Spd | ClassifierId::Thm3Eod => {
            let constraint = id.constraint().unwrap_or(Constraint::Spd);
            let params = TradeoffParams::new(
                lambda.unwrap_or(0.0),
                constraint,
                ctx.original.base_rate(),
                ctx.tie_break,
            )?;
            let (fit, _) = train_thm3_corrected(ctx.train, &ctx.setting, &params, &ctx.lr)?;
            Ok(linear(fit))
        }
        ClassifierId::Expgrad => {
            let fit = train_expgrad(ctx.train, &ctx.expgrad, &ctx.lr)?;
            Ok(Trained {
                converged: fit.within_tolerance,
                model: TrainedModel::Randomized(fit.classifier),
            })
        }
    }
}

/// `P(Y = 1)` of the training distribution a synthetic model induces
/// under `setting`.
pub fn oracle_base_rate(model: &GaussianSubgroupModel, setting: &BiasSetting) -> Result<f64> {
    let biased = model.biased_model(setting.beta_pos, setting.beta_neg)?;
    let p = biased.priors();
    use crate::dataset::Subgroup;
    let p10 = p[Subgroup::new(1, 0)] * (1.0 - setting.nu);
    Ok(p10 + p[Subgroup::new(1, 1)])
}
