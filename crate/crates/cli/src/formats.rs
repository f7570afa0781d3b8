//! File formats: CSV artifacts, the q-table dump and scenario files.
//!
//! All writers are deterministic: fixed column orders, fixed float
//! formatting, rows sorted by construction. Reruns of the same config
//! produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use chaintwin_core::agent::{QEntry, QTable};
use chaintwin_core::chain::{Block, MissedCycle};
use chaintwin_core::consensus::ProtocolId;
use chaintwin_core::control::DecisionRecord;
use chaintwin_core::scenario::Scenario;
use chaintwin_core::twin::TwinState;

use crate::CliError;

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(CliError::io)?;
        }
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// One result row per (controller, seed): the deterministic evaluation
/// artifact. Wall-clock timings live in the runtime CSV instead, so this
/// file is bit-identical across reruns.
pub struct ResultRow {
    pub label: String,
    pub workload: String,
    pub controller: &'static str,
    pub seed_index: u32,
    pub scenario_seed: u64,
    pub mean_latency_secs: f64,
    pub simulator_calls: u64,
    pub decisions: usize,
    pub txs_committed: u64,
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "label,workload,controller,seed_index,scenario_seed,mean_latency_s,total_simulator_calls,decisions,txs_committed\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{},{},{}",
            r.label,
            r.workload,
            r.controller,
            r.seed_index,
            r.scenario_seed,
            r.mean_latency_secs,
            r.simulator_calls,
            r.decisions,
            r.txs_committed
        );
    }
    out
}

pub fn learning_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("episode,mean_latency_s\n");
    for (episode, latency) in curve.iter().enumerate() {
        let _ = writeln!(out, "{},{:.6}", episode, latency);
    }
    out
}

/// Per-decision audit trail.
pub fn decisions_csv(decisions: &[DecisionRecord]) -> String {
    let mut out = String::from(
        "window_end_ms,f,n_l,n_h,action,source,reward,simulator_calls,decision_wall_ns\n",
    );
    for d in decisions {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{},{}",
            d.window_end.millis(),
            d.state.failure as u8,
            d.state.net_lo,
            d.state.net_hi,
            d.action,
            d.source.as_str(),
            d.reward,
            d.simulator_calls,
            d.decision_wall_ns
        );
    }
    out
}

pub fn twin_csv(trace: &[TwinState]) -> String {
    let mut out = String::from("window_end_ms,f,n_l,n_h,tps_estimate\n");
    for s in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4}",
            s.as_of.millis(),
            s.failure as u8,
            s.net_lo,
            s.net_hi,
            s.tps_estimate
        );
    }
    out
}

/// Block trace: one row per committed block plus one per missed cycle,
/// ordered by time. Missed-cycle rows leave the commit columns empty.
pub fn blocks_csv(blocks: &[Block], missed: &[MissedCycle]) -> String {
    enum Row<'a> {
        Block(&'a Block),
        Missed(&'a MissedCycle),
    }
    let mut rows: Vec<(u64, Row)> = blocks
        .iter()
        .map(|b| (b.proposed_at.millis(), Row::Block(b)))
        .chain(missed.iter().map(|m| (m.at.millis(), Row::Missed(m))))
        .collect();
    rows.sort_by_key(|(at, row)| {
        (
            *at,
            match row {
                Row::Block(b) => b.height,
                Row::Missed(m) => m.round,
            },
        )
    });

    let mut out = String::from(
        "height,producer,protocol,proposed_at_ms,committed_at_ms,tx_count,avg_latency_s,missed_cycle,miss_reason\n",
    );
    for (_, row) in rows {
        match row {
            Row::Block(b) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{:.6},0,",
                    b.height,
                    b.producer.0,
                    b.protocol,
                    b.proposed_at.millis(),
                    b.committed_at.millis(),
                    b.txs.len(),
                    b.avg_latency_secs().unwrap_or(f64::NAN)
                );
            }
            Row::Missed(m) => {
                let _ = writeln!(
                    out,
                    ",{},,{},,0,,1,{}",
                    m.producer.0,
                    m.at.millis(),
                    m.reason.as_str()
                );
            }
        }
    }
    out
}

/// Consensus history rows for every block in a run.
pub fn consensus_csv(blocks: &[Block]) -> String {
    let mut out = String::from("height,phase,sender,receiver,sent_at_ms,received_at_ms\n");
    for b in blocks {
        for m in &b.history.messages {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                b.height,
                m.phase.as_str(),
                m.sender.0,
                m.receiver.0,
                m.sent_at.millis(),
                m.received_at.millis()
            );
        }
    }
    out
}

pub struct RuntimeRow {
    pub controller: &'static str,
    pub seed_index: u32,
    pub decisions: usize,
    pub simulator_calls: u64,
    pub total_decision_wall_ns: u64,
    pub mean_latency_secs: f64,
}

pub fn runtime_csv(rows: &[RuntimeRow]) -> String {
    let mut out = String::from(
        "controller,seed_index,decisions,total_simulator_calls,total_decision_wall_ns,mean_decision_wall_ns,mean_latency_s\n",
    );
    for r in rows {
        let mean_ns = if r.decisions == 0 {
            0
        } else {
            r.total_decision_wall_ns / r.decisions as u64
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6}",
            r.controller,
            r.seed_index,
            r.decisions,
            r.simulator_calls,
            r.total_decision_wall_ns,
            mean_ns,
            r.mean_latency_secs
        );
    }
    out
}

/// Q-table dump: one row per (state, action). Q values use the shortest
/// representation that round-trips exactly, so a reloaded table reproduces
/// the learned policy bit for bit.
pub fn qtable_text(table: &QTable) -> String {
    let mut out = String::from("f,n_l,n_h,action,q,visits\n");
    for (&((f, lo, hi), action), entry) in table.iter() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            f, lo, hi, action, entry.q, entry.visits
        );
    }
    out
}

pub fn parse_qtable(text: &str) -> Result<QTable, CliError> {
    let mut table = QTable::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::Io(format!(
                "q-table line {} malformed",
                lineno + 1
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Io(format!("q-table line {}: bad {what}", lineno + 1)))
        };
        let key = (
            parse(fields[0], "flag")? as u8,
            parse(fields[1], "n_l")? as u32,
            parse(fields[2], "n_h")? as u32,
        );
        let action = ProtocolId::parse(fields[3])
            .ok_or_else(|| CliError::Io(format!("q-table line {}: bad action", lineno + 1)))?;
        let entry = QEntry {
            q: parse(fields[4], "q")?,
            visits: parse(fields[5], "visits")? as u32,
        };
        table.insert_raw(key, action, entry);
    }
    Ok(table)
}

pub fn load_qtable(path: &Path) -> Result<QTable, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::MissingArtifact(format!("{}: {e}", path.display())))?;
    parse_qtable(&text)
}

/// Scenario files are TOML renderings of the full scenario record; loading
/// one reproduces the exact run inputs.
pub fn scenario_to_string(scenario: &Scenario) -> Result<String, CliError> {
    toml::to_string(scenario).map_err(CliError::io)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::MissingArtifact(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
