//! Fixed-point emission arithmetic and process-model types.
//!
//! Emissions are integers in milligrams of CO2-equivalent. There is no
//! floating point anywhere in footprint arithmetic; every product and sum is
//! overflow-checked and an overflow is a hard error.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ArithmeticError {
    #[error("emission arithmetic overflowed the signed 64-bit range")]
    Overflow,
    #[error("emission quantity must be non-negative, got {0}")]
    Negative(i64),
}

/// Emissions in milligrams CO2e.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EmissionQuantity(pub i64);

/// Milligrams CO2e per resource unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmissionFactor(pub u64);

/// Consumed resource units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceAmount(pub u64);

impl EmissionQuantity {
    pub const ZERO: Self = Self(0);

    pub fn value(self) -> i64 {
        self.0
    }
}

impl fmt::Display for EmissionQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mgCO2e", self.0)
    }
}

/// `factor × amount`, rejected if the product leaves the signed 64-bit range.
pub fn compute_emissions(
    factor: EmissionFactor,
    amount: ResourceAmount,
) -> Result<EmissionQuantity, ArithmeticError> {
    factor
        .0
        .checked_mul(amount.0)
        .and_then(|p| i64::try_from(p).ok())
        .map(EmissionQuantity)
        .ok_or(ArithmeticError::Overflow)
}

/// Checked sum of a running total and the current activity's emissions.
pub fn aggregate(
    previous_total: EmissionQuantity,
    current: EmissionQuantity,
) -> Result<EmissionQuantity, ArithmeticError> {
    for q in [previous_total, current] {
        if q.0 < 0 {
            return Err(ArithmeticError::Negative(q.0));
        }
    }
    previous_total
        .0
        .checked_add(current.0)
        .map(EmissionQuantity)
        .ok_or(ArithmeticError::Overflow)
}

/// Checked sum over an iterator of quantities, starting from zero.
pub fn sum_emissions<I>(quantities: I) -> Result<EmissionQuantity, ArithmeticError>
where
    I: IntoIterator<Item = EmissionQuantity>,
{
    quantities
        .into_iter()
        .try_fold(EmissionQuantity::ZERO, aggregate)
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Scope {
    #[default]
    #[serde(rename = "scope1")]
    Scope1,
    #[serde(rename = "scope2")]
    Scope2,
    #[serde(rename = "scope3")]
    Scope3,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Scope1, Scope::Scope2, Scope::Scope3];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    ProveFootprint,
    VerifyExternal,
    Compose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SingleStep,
    Composed,
    Chained,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::SingleStep, Strategy::Composed, Strategy::Chained];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SingleStep => "single_step",
            Strategy::Composed => "composed",
            Strategy::Chained => "chained",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "single_step" | "single" => Ok(Strategy::SingleStep),
            "composed" | "composite" => Ok(Strategy::Composed),
            "chained" => Ok(Strategy::Chained),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

/// One (factor, amount) line carried by a single-step proving activity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineItem {
    pub id: String,
    #[serde(rename = "factor_mg_per_unit")]
    pub factor: EmissionFactor,
    #[serde(rename = "amount_units")]
    pub amount: ResourceAmount,
    #[serde(default)]
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivitySpec {
    pub id: String,
    pub name: String,
    pub kind: ActivityKind,
    #[serde(
        rename = "factor_mg_per_unit",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub factor: Option<EmissionFactor>,
    #[serde(
        rename = "amount_units",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub amount: Option<ResourceAmount>,
    /// Only used by the single proving activity of a single-step model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<LineItem>,
    pub guest_ref: String,
    #[serde(default)]
    pub scope: Scope,
}

impl ActivitySpec {
    pub fn prove(id: &str, factor: u64, amount: u64, guest_ref: &str, scope: Scope) -> Self {
        Self {
            id: id.to_string(),
            name: id.to_string(),
            kind: ActivityKind::ProveFootprint,
            factor: Some(EmissionFactor(factor)),
            amount: Some(ResourceAmount(amount)),
            items: Vec::new(),
            guest_ref: guest_ref.to_string(),
            scope,
        }
    }

    pub fn prove_items(id: &str, items: Vec<LineItem>, guest_ref: &str, scope: Scope) -> Self {
        Self {
            id: id.to_string(),
            name: id.to_string(),
            kind: ActivityKind::ProveFootprint,
            factor: None,
            amount: None,
            items,
            guest_ref: guest_ref.to_string(),
            scope,
        }
    }

    pub fn verify_external(id: &str, guest_ref: &str, scope: Scope) -> Self {
        Self {
            id: id.to_string(),
            name: id.to_string(),
            kind: ActivityKind::VerifyExternal,
            factor: None,
            amount: None,
            items: Vec::new(),
            guest_ref: guest_ref.to_string(),
            scope,
        }
    }

    pub fn compose(id: &str, guest_ref: &str) -> Self {
        Self {
            id: id.to_string(),
            name: id.to_string(),
            kind: ActivityKind::Compose,
            factor: None,
            amount: None,
            items: Vec::new(),
            guest_ref: guest_ref.to_string(),
            scope: Scope::Scope1,
        }
    }

    /// Every (factor, amount) pair this activity proves, in order.
    pub fn footprint_pairs(&self) -> Vec<(EmissionFactor, ResourceAmount)> {
        match (self.factor, self.amount) {
            (Some(f), Some(a)) => vec![(f, a)],
            _ => self.items.iter().map(|i| (i.factor, i.amount)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub id: String,
    pub strategy: Strategy,
    pub activities: Vec<ActivitySpec>,
}

impl ProcessModel {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("process model serializes")
    }

    pub fn activity(&self, id: &str) -> Option<&ActivitySpec> {
        self.activities.iter().find(|a| a.id == id)
    }

    /// Every (factor, amount) pair in the model, across all proving activities.
    pub fn footprint_pairs(&self) -> Vec<(EmissionFactor, ResourceAmount)> {
        self.activities
            .iter()
            .filter(|a| a.kind == ActivityKind::ProveFootprint)
            .flat_map(ActivitySpec::footprint_pairs)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EmptyActivities,
    DuplicateActivityId(String),
    EmptyActivityId(usize),
    MissingFactorOrAmount(String),
    UnexpectedFactorOrAmount(String),
    SingleStepItemsRequired(String),
    ItemsOutsideSingleStep(String),
    SingleStepProvingCount(usize),
    ComposeCount(usize),
    ComposeNotTrailing(String),
    ComposeOutsideComposed(String),
    VerifyExternalInComposed(String),
    VerifyExternalAfterProving(String),
    MultipleVerifyExternalInChain,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyActivities => write!(f, "activities non-empty"),
            Violation::DuplicateActivityId(id) => write!(f, "activity id '{id}' is not unique"),
            Violation::EmptyActivityId(i) => write!(f, "activity at index {i} has an empty id"),
            Violation::MissingFactorOrAmount(id) => {
                write!(f, "proving activity '{id}' needs factor and amount")
            }
            Violation::UnexpectedFactorOrAmount(id) => {
                write!(
                    f,
                    "activity '{id}' is not a proving activity but carries factor/amount"
                )
            }
            Violation::SingleStepItemsRequired(id) => {
                write!(f, "single-step activity '{id}' must carry a non-empty item list and no scalar factor/amount")
            }
            Violation::ItemsOutsideSingleStep(id) => {
                write!(
                    f,
                    "activity '{id}' carries line items outside a single-step model"
                )
            }
            Violation::SingleStepProvingCount(n) => write!(
                f,
                "single-step model needs exactly one proving activity, found {n}"
            ),
            Violation::ComposeCount(n) => {
                write!(
                    f,
                    "composed model needs exactly one Compose activity, found {n}"
                )
            }
            Violation::ComposeNotTrailing(id) => {
                write!(
                    f,
                    "Compose must be trailing ('{id}' is not the last activity)"
                )
            }
            Violation::ComposeOutsideComposed(id) => {
                write!(f, "Compose activity '{id}' only allowed in composed models")
            }
            Violation::VerifyExternalInComposed(id) => write!(
                f,
                "external verification '{id}' is not supported in composed models"
            ),
            Violation::VerifyExternalAfterProving(id) => write!(
                f,
                "external verification '{id}' must precede every proving activity"
            ),
            Violation::MultipleVerifyExternalInChain => {
                write!(f, "a chained model may verify at most one external receipt")
            }
        }
    }
}

/// Result of [`validate_process_model`]; empty means well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&msgs.join("; "))
    }
}

pub fn validate_process_model(model: &ProcessModel) -> ValidationReport {
    let mut violations = Vec::new();
    let acts = &model.activities;
    if acts.is_empty() {
        violations.push(Violation::EmptyActivities);
    }

    let mut seen = HashSet::new();
    for (i, a) in acts.iter().enumerate() {
        if a.id.is_empty() {
            violations.push(Violation::EmptyActivityId(i));
        } else if !seen.insert(a.id.as_str()) {
            violations.push(Violation::DuplicateActivityId(a.id.clone()));
        }
        let has_scalar = a.factor.is_some() || a.amount.is_some();
        match a.kind {
            ActivityKind::ProveFootprint if model.strategy == Strategy::SingleStep => {
                if a.items.is_empty() || has_scalar {
                    violations.push(Violation::SingleStepItemsRequired(a.id.clone()));
                }
            }
            ActivityKind::ProveFootprint => {
                if a.factor.is_none() || a.amount.is_none() {
                    violations.push(Violation::MissingFactorOrAmount(a.id.clone()));
                }
                if !a.items.is_empty() {
                    violations.push(Violation::ItemsOutsideSingleStep(a.id.clone()));
                }
            }
            ActivityKind::VerifyExternal | ActivityKind::Compose => {
                if has_scalar || !a.items.is_empty() {
                    violations.push(Violation::UnexpectedFactorOrAmount(a.id.clone()));
                }
            }
        }
    }

    let count = |kind| acts.iter().filter(|a| a.kind == kind).count();
    let composes = count(ActivityKind::Compose);
    match model.strategy {
        Strategy::Composed => {
            if composes != 1 {
                violations.push(Violation::ComposeCount(composes));
            }
            let last = acts.len().saturating_sub(1);
            for (i, a) in acts.iter().enumerate() {
                if a.kind == ActivityKind::Compose && i != last {
                    violations.push(Violation::ComposeNotTrailing(a.id.clone()));
                }
                if a.kind == ActivityKind::VerifyExternal {
                    violations.push(Violation::VerifyExternalInComposed(a.id.clone()));
                }
            }
        }
        Strategy::SingleStep | Strategy::Chained => {
            for a in acts.iter().filter(|a| a.kind == ActivityKind::Compose) {
                violations.push(Violation::ComposeOutsideComposed(a.id.clone()));
            }
            if model.strategy == Strategy::SingleStep {
                let provers = count(ActivityKind::ProveFootprint);
                if provers != 1 {
                    violations.push(Violation::SingleStepProvingCount(provers));
                }
            } else if count(ActivityKind::VerifyExternal) > 1 {
                violations.push(Violation::MultipleVerifyExternalInChain);
            }
            let mut proved = false;
            for a in acts {
                match a.kind {
                    ActivityKind::ProveFootprint => proved = true,
                    ActivityKind::VerifyExternal if proved => {
                        violations.push(Violation::VerifyExternalAfterProving(a.id.clone()))
                    }
                    _ => {}
                }
            }
        }
    }

    ValidationReport { violations }
}

/// Product carbon footprint extracted from a completed process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pcf {
    pub total: EmissionQuantity,
    pub per_activity: Vec<(String, EmissionQuantity)>,
    pub scope_breakdown: BTreeMap<Scope, EmissionQuantity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PcfError {
    #[error(transparent)]
    Arithmetic(#[from] ArithmeticError),
    #[error("PCF total {total} does not match per-activity sum {per_activity}")]
    Inconsistent {
        total: EmissionQuantity,
        per_activity: EmissionQuantity,
    },
}

impl Pcf {
    /// Builds a PCF from attributed per-activity emissions, checking that
    /// `total` is reproduced exactly by both the activity and scope sums.
    pub fn from_parts(
        total: EmissionQuantity,
        per_activity: Vec<(String, Scope, EmissionQuantity)>,
    ) -> Result<Self, PcfError> {
        let mut scope_breakdown: BTreeMap<Scope, EmissionQuantity> = Scope::ALL
            .iter()
            .map(|s| (*s, EmissionQuantity::ZERO))
            .collect();
        for (_, scope, q) in &per_activity {
            let slot = scope_breakdown.get_mut(scope).expect("all scopes present");
            *slot = aggregate(*slot, *q)?;
        }
        let activity_sum = sum_emissions(per_activity.iter().map(|(_, _, q)| *q))?;
        if activity_sum != total {
            return Err(PcfError::Inconsistent {
                total,
                per_activity: activity_sum,
            });
        }
        Ok(Self {
            total,
            per_activity: per_activity.into_iter().map(|(id, _, q)| (id, q)).collect(),
            scope_breakdown,
        })
    }

    pub fn is_consistent(&self) -> bool {
        let by_activity = sum_emissions(self.per_activity.iter().map(|(_, q)| *q));
        let by_scope = sum_emissions(self.scope_breakdown.values().copied());
        by_activity == Ok(self.total) && by_scope == Ok(self.total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chained(n: usize) -> ProcessModel {
        ProcessModel {
            id: "p".into(),
            strategy: Strategy::Chained,
            activities: (0..n)
                .map(|i| ActivitySpec::prove(&format!("a{i}"), 2000, 3, "g", Scope::Scope1))
                .collect(),
        }
    }

    #[test]
    fn compute_emissions_examples() {
        assert_eq!(
            compute_emissions(EmissionFactor(2000), ResourceAmount(3)),
            Ok(EmissionQuantity(6000))
        );
        assert_eq!(
            compute_emissions(EmissionFactor(0), ResourceAmount(1_000_000)),
            Ok(EmissionQuantity(0))
        );
        assert_eq!(
            compute_emissions(EmissionFactor(1 << 40), ResourceAmount(1 << 40)),
            Err(ArithmeticError::Overflow)
        );
    }

    #[test]
    fn product_fitting_u64_but_not_i64_overflows() {
        // 2^32 * 2^31 = 2^63 fits u64 but not i64
        assert_eq!(
            compute_emissions(EmissionFactor(1 << 32), ResourceAmount(1 << 31)),
            Err(ArithmeticError::Overflow)
        );
        assert_eq!(
            compute_emissions(EmissionFactor(i64::MAX as u64), ResourceAmount(1)),
            Ok(EmissionQuantity(i64::MAX))
        );
    }

    #[test]
    fn aggregate_examples() {
        let q = EmissionQuantity;
        assert_eq!(aggregate(q(10000), q(6000)), Ok(q(16000)));
        assert_eq!(aggregate(q(0), q(0)), Ok(q(0)));
        assert_eq!(aggregate(q(i64::MAX), q(1)), Err(ArithmeticError::Overflow));
        assert_eq!(aggregate(q(-1), q(1)), Err(ArithmeticError::Negative(-1)));
    }

    #[test]
    fn chained_model_with_three_provers_is_valid() {
        assert!(validate_process_model(&chained(3)).is_valid());
    }

    #[test]
    fn compose_in_the_middle_is_rejected() {
        let model = ProcessModel {
            id: "p".into(),
            strategy: Strategy::Composed,
            activities: vec![
                ActivitySpec::prove("a", 1, 1, "g", Scope::Scope1),
                ActivitySpec::compose("c", "composer"),
                ActivitySpec::prove("b", 1, 1, "g", Scope::Scope1),
            ],
        };
        let report = validate_process_model(&model);
        assert_eq!(
            report.violations,
            vec![Violation::ComposeNotTrailing("c".into())]
        );
        assert!(report.to_string().contains("Compose must be trailing"));
    }

    #[test]
    fn empty_model_is_rejected() {
        let mut model = chained(0);
        model.strategy = Strategy::Chained;
        let report = validate_process_model(&model);
        assert_eq!(report.violations, vec![Violation::EmptyActivities]);
        assert_eq!(report.to_string(), "activities non-empty");
    }

    #[test]
    fn every_violation_is_listed() {
        let mut model = chained(2);
        model.activities[1].id = "a0".into();
        model.activities[0].amount = None;
        model
            .activities
            .push(ActivitySpec::compose("c", "composer"));
        let report = validate_process_model(&model);
        assert!(report
            .violations
            .contains(&Violation::DuplicateActivityId("a0".into())));
        assert!(report
            .violations
            .contains(&Violation::MissingFactorOrAmount("a0".into())));
        assert!(report
            .violations
            .contains(&Violation::ComposeOutsideComposed("c".into())));
    }

    #[test]
    fn single_step_shape_rules() {
        let item = LineItem {
            id: "i".into(),
            factor: EmissionFactor(1),
            amount: ResourceAmount(1),
            scope: Scope::Scope1,
        };
        let ok = ProcessModel {
            id: "s".into(),
            strategy: Strategy::SingleStep,
            activities: vec![ActivitySpec::prove_items(
                "p",
                vec![item],
                "g",
                Scope::Scope1,
            )],
        };
        assert!(validate_process_model(&ok).is_valid());

        let mut two = ok.clone();
        let mut second = two.activities[0].clone();
        second.id = "q".into();
        two.activities.push(second);
        assert!(validate_process_model(&two)
            .violations
            .contains(&Violation::SingleStepProvingCount(2)));

        let scalar = ProcessModel {
            activities: vec![ActivitySpec::prove("p", 1, 1, "g", Scope::Scope1)],
            ..ok
        };
        assert!(validate_process_model(&scalar)
            .violations
            .contains(&Violation::SingleStepItemsRequired("p".into())));
    }

    #[test]
    fn external_verification_must_lead_the_chain() {
        let mut model = chained(2);
        model.activities.push(ActivitySpec::verify_external(
            "v",
            "supplier",
            Scope::Scope3,
        ));
        assert!(validate_process_model(&model)
            .violations
            .contains(&Violation::VerifyExternalAfterProving("v".into())));
        model.activities.rotate_right(1);
        assert!(validate_process_model(&model).is_valid());
    }

    #[test]
    fn process_model_json_format() {
        let text = r#"{
            "id": "demo",
            "strategy": "chained",
            "activities": [
                {"id": "v", "name": "validate scope 3", "kind": "verify_external",
                 "guest_ref": "supplier", "scope": "scope3"},
                {"id": "a", "name": "electricity", "kind": "prove_footprint",
                 "factor_mg_per_unit": 2000, "amount_units": 3,
                 "guest_ref": "footprint", "scope": "scope2"}
            ]
        }"#;
        let model = ProcessModel::from_json(text).unwrap();
        assert_eq!(model.strategy, Strategy::Chained);
        assert_eq!(model.activities[1].factor, Some(EmissionFactor(2000)));
        assert_eq!(model.activities[0].scope, Scope::Scope3);
        assert!(validate_process_model(&model).is_valid());
        assert_eq!(ProcessModel::from_json(&model.to_json()).unwrap(), model);
    }

    #[test]
    fn pcf_from_parts_checks_totals() {
        let parts = vec![
            ("a".to_string(), Scope::Scope3, EmissionQuantity(10)),
            ("b".to_string(), Scope::Scope1, EmissionQuantity(5)),
        ];
        let pcf = Pcf::from_parts(EmissionQuantity(15), parts.clone()).unwrap();
        assert!(pcf.is_consistent());
        assert_eq!(pcf.scope_breakdown[&Scope::Scope2], EmissionQuantity(0));
        assert!(matches!(
            Pcf::from_parts(EmissionQuantity(16), parts),
            Err(PcfError::Inconsistent { .. })
        ));
    }
}
