//! Closed-loop evaluation: driving score, success rate and per-category ability means.

pub mod ablation;

pub use ablation::{ablate_penalties, ablate_regularization, ablate_rounds, AblationRow, AblationTable};

use crate::action::{best_feasible, path_feasibility, ActionSource};
use crate::encoder::encode;
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::rl::run_parallel;
use crate::sim::{initial_world, step, Category, PenaltyKind, Scenario, ScenarioSpec, DECISION_INTERVAL};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Multiplicative driving-score penalty per infraction.
pub fn infraction_multiplier(kind: PenaltyKind) -> f64 {
    match kind {
        PenaltyKind::Collision => 0.60,
        PenaltyKind::RedLight => 0.70,
        PenaltyKind::StopSignViolation => 0.80,
        // Deviation ends the route instead; its cost is the frozen completion.
        PenaltyKind::RouteDeviation => 1.00,
    }
}

/// `100 · completion · Π multiplier(infraction)`.
pub fn driving_score(route_completion: f64, infractions: &[PenaltyKind]) -> f64 {
    let c = route_completion.clamp(0.0, 1.0);
    infractions
        .iter()
        .fold(100.0 * c, |acc, k| acc * infraction_multiplier(*k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub scenario_id: String,
    pub category: Category,
    pub route_completion: f64,
    pub infractions: Vec<PenaltyKind>,
    pub success: bool,
    /// Simulated time at the end of the route (s).
    pub duration: f64,
    pub driving_score: f64,
    /// Diagnostic when the route was aborted by an error.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub routes: usize,
    pub ds: f64,
    pub sr: f64,
}

impl Summary {
    pub fn of<'a>(routes: impl IntoIterator<Item = &'a RouteResult>) -> Self {
        let rs: Vec<&RouteResult> = routes.into_iter().collect();
        let n = rs.len();
        if n == 0 {
            return Summary {
                routes: 0,
                ds: 0.0,
                sr: 0.0,
            };
        }
        Summary {
            routes: n,
            ds: rs.iter().map(|r| r.driving_score).sum::<f64>() / n as f64,
            sr: 100.0 * rs.iter().filter(|r| r.success).count() as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub rollout: Summary,
    pub remaining: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub seed: u64,
    pub action_source: String,
    pub routes: Vec<RouteResult>,
    /// Mean driving score, 0 to 100.
    pub ds: f64,
    /// Success rate in percent.
    pub sr: f64,
    /// Success rate per category, in percent, for categories present.
    pub ability: BTreeMap<Category, f64>,
    /// Unweighted mean of the category values.
    pub mean_ability: f64,
    pub split: Option<SplitSummary>,
}

impl EvalReport {
    pub fn from_routes(routes: Vec<RouteResult>, seed: u64, action_source: &str) -> Self {
        let overall = Summary::of(&routes);
        let mut ability = BTreeMap::new();
        for cat in Category::ALL {
            let s = Summary::of(routes.iter().filter(|r| r.category == cat));
            if s.routes > 0 {
                ability.insert(cat, s.sr);
            }
        }
        let mean_ability = if ability.is_empty() {
            0.0
        } else {
            ability.values().sum::<f64>() / ability.len() as f64
        };
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            seed,
            action_source: action_source.into(),
            routes,
            ds: overall.ds,
            sr: overall.sr,
            ability,
            mean_ability,
            split: None,
        }
    }

    /// Tags routes as rollout-set (ids in `rollout`) or remaining and summarises both.
    pub fn with_split(mut self, rollout: &[String]) -> Self {
        let (a, b): (Vec<&RouteResult>, Vec<&RouteResult>) = self
            .routes
            .iter()
            .partition(|r| rollout.contains(&r.scenario_id));
        self.split = Some(SplitSummary {
            rollout: Summary::of(a),
            remaining: Summary::of(b),
        });
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Flat per-route rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "scenario_id,category,route_completion,infractions,success,duration,driving_score,error\n",
        );
        for r in &self.routes {
            let inf: Vec<&str> = r.infractions.iter().map(|k| k.short()).collect();
            let _ = writeln!(
                s,
                "{},{},{:.6},{},{},{:.1},{:.4},{}",
                r.scenario_id,
                r.category.short(),
                r.route_completion,
                inf.join("+"),
                r.success,
                r.duration,
                r.driving_score,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }
}

/// Greedy closed-loop run of one route.
pub fn run_route(
    scenario: Arc<Scenario>,
    policy: &PolicyParams,
    source: &ActionSource,
    seed: u64,
) -> RouteResult {
    let category = scenario.spec.category;
    let id = scenario.id().to_string();
    let mut world = initial_world(scenario, seed);
    let mut outcome = || -> Result<RouteResult> {
        loop {
            let emb = encode(&world);
            let (dist, _) = crate::policy::forward(&emb, policy)?;
            let action = best_feasible(&dist, &path_feasibility(&world))
                .ok_or_else(|| Error::Selection("no feasible candidate".into()))?;
            let traj = source.trajectory(&world, &emb, action)?;
            let r = step(&world, &traj, DECISION_INTERVAL)?;
            if r.done {
                let infractions: Vec<PenaltyKind> = r.events.iter().map(|e| e.kind).collect();
                let success = r.reached_destination && infractions.is_empty();
                let completion = if success { 1.0 } else { r.world.progress };
                return Ok(RouteResult {
                    scenario_id: id.clone(),
                    category,
                    route_completion: completion,
                    driving_score: driving_score(completion, &infractions),
                    infractions,
                    success,
                    duration: r.world.t,
                    error: None,
                });
            }
            world = r.world;
        }
    };
    outcome().unwrap_or_else(|e| RouteResult {
        scenario_id: id.clone(),
        category,
        route_completion: world.progress,
        infractions: vec![],
        success: false,
        duration: world.t,
        driving_score: driving_score(world.progress, &[]),
        error: Some(e.to_string()),
    })
}

/// Evaluates every route once with greedy selection over the feasible candidates.
pub fn evaluate(
    policy: &PolicyParams,
    source: &ActionSource,
    routes: &[ScenarioSpec],
    seed: u64,
    workers: usize,
) -> Result<EvalReport> {
    if routes.is_empty() {
        return Err(Error::Argument("route list is empty".into()));
    }
    let prepared: Vec<Arc<Scenario>> = routes
        .iter()
        .map(|s| Scenario::new(s.clone()).map(Arc::new))
        .collect::<Result<_>>()?;
    let results = run_parallel(
        &prepared,
        workers,
        |s| s.id().to_string(),
        |s| Ok(run_route(s.clone(), policy, source, seed)),
    )?;
    Ok(EvalReport::from_routes(results, seed, source.name()))
}
