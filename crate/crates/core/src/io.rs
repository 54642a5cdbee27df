//! Reading comparison data and writing every output file.
//!
//! All numbers are written with 17 significant digits so values survive a
//! text round trip exactly. Files are written to a temporary sibling and then
//! renamed into place.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complex::{EdgeFlow, OperatorSet};
use crate::error::{Error, Result};
use crate::measures::{
    global_measure_trace, mean_flows, ranked_triads, summarize, MeasureSummary, Quantity,
};
use crate::sampler::{ComparisonData, Hyperparams, ModelKind, PosteriorDraws};
use crate::sim::{logistic, ModelMetrics, ModelOutcome, StudyReport};

pub const FORMAT_VERSION: u32 = 1;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_f64)
}

/// Writes `path` atomically via a temporary file in the same directory.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(path, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

// ---------------------------------------------------------------- input

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// One game per row: `winner,loser[,date]`.
    GameLog,
    /// One pair per row: `label_i,label_j,wins_i,trials`.
    Aggregated,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "game-log" | "games" => Ok(InputFormat::GameLog),
            "aggregated" => Ok(InputFormat::Aggregated),
            other => Err(Error::InvalidInput(format!(
                "unknown data format '{other}' (expected game-log or aggregated)"
            ))),
        }
    }
}

/// One observed game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameRecord {
    pub date: Option<String>,
    pub winner: String,
    pub loser: String,
}

pub fn load_games(path: &Path, format: InputFormat) -> Result<ComparisonData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = match format {
        InputFormat::GameLog => parse_game_log(file),
        InputFormat::Aggregated => parse_aggregated(file),
    };
    parsed.map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Data(format!("missing required column '{name}'")))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input)
}

fn data_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Data(format!("line {line}: {e}"))
}

/// Reads game records, validating every row.
pub fn parse_game_records<R: Read>(input: R) -> Result<Vec<GameRecord>> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(data_err)?.clone();
    let wi = column(&headers, "winner")?;
    let li = column(&headers, "loser")?;
    let di = column(&headers, "date").ok();
    let mut games = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(data_err)?;
        let line = line_of(&rec);
        let winner = rec.get(wi).unwrap_or("").to_string();
        let loser = rec.get(li).unwrap_or("").to_string();
        if winner.is_empty() || loser.is_empty() {
            return Err(Error::Data(format!("line {line}: empty entity label")));
        }
        if winner == loser {
            return Err(Error::Data(format!("line {line}: '{winner}' cannot play itself")));
        }
        let date = di.and_then(|d| rec.get(d)).filter(|d| !d.is_empty()).map(str::to_string);
        games.push(GameRecord { date, winner, loser });
    }
    Ok(games)
}

struct PairCounts {
    labels: Vec<String>,
    position: BTreeMap<String, usize>,
}

impl PairCounts {
    fn new<'a>(names: impl Iterator<Item = &'a str>) -> Result<Self> {
        let set: BTreeSet<&str> = names.collect();
        if set.is_empty() {
            return Err(Error::Data("no entities".into()));
        }
        if set.len() < 3 {
            return Err(Error::Data(format!(
                "need at least 3 entities, found {}",
                set.len()
            )));
        }
        let labels: Vec<String> = set.into_iter().map(str::to_string).collect();
        let position = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Ok(Self { labels, position })
    }

    fn edge(&self, a: &str, b: &str) -> (usize, bool) {
        let (i, j) = (self.position[a], self.position[b]);
        let (lo, hi, a_first) = if i < j { (i, j, true) } else { (j, i, false) };
        let n = self.labels.len();
        // canonical lexicographic edge index of (lo, hi)
        (lo * (2 * n - lo - 1) / 2 + (hi - lo - 1), a_first)
    }
}

/// Aggregates a game log. Labels are sorted lexicographically to fix indices.
pub fn parse_game_log<R: Read>(input: R) -> Result<ComparisonData> {
    let games = parse_game_records(input)?;
    aggregate_games(&games)
}

pub fn aggregate_games(games: &[GameRecord]) -> Result<ComparisonData> {
    let counts = PairCounts::new(
        games
            .iter()
            .flat_map(|g| [g.winner.as_str(), g.loser.as_str()]),
    )?;
    let n = counts.labels.len();
    let n_edges = n * (n - 1) / 2;
    let mut wins = vec![0u32; n_edges];
    let mut trials = vec![0u32; n_edges];
    for g in games {
        let (e, winner_first) = counts.edge(&g.winner, &g.loser);
        trials[e] += 1;
        if winner_first {
            wins[e] += 1;
        }
    }
    ComparisonData::new(counts.labels, wins, trials)
}

/// Reads `label_i,label_j,wins_i,trials` rows. Rows with `label_i > label_j`
/// are flipped to canonical order.
pub fn parse_aggregated<R: Read>(input: R) -> Result<ComparisonData> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(data_err)?.clone();
    let cols = [
        column(&headers, "label_i")?,
        column(&headers, "label_j")?,
        column(&headers, "wins_i")?,
        column(&headers, "trials")?,
    ];
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(data_err)?;
        let line = line_of(&rec);
        let field = |c: usize| rec.get(c).unwrap_or("");
        let (a, b) = (field(cols[0]).to_string(), field(cols[1]).to_string());
        let num = |c: usize, what: &str| -> Result<u32> {
            field(c).parse::<u32>().map_err(|_| {
                Error::Data(format!("line {line}: {what} '{}' is not a non-negative integer", field(c)))
            })
        };
        let (w, n) = (num(cols[2], "wins_i")?, num(cols[3], "trials")?);
        if a.is_empty() || b.is_empty() {
            return Err(Error::Data(format!("line {line}: empty entity label")));
        }
        if a == b {
            return Err(Error::Data(format!("line {line}: pair ('{a}', '{b}') repeats an entity")));
        }
        if w > n {
            return Err(Error::Data(format!("line {line}: wins {w} exceed trials {n}")));
        }
        rows.push((line, a, b, w, n));
    }
    let counts = PairCounts::new(rows.iter().flat_map(|r| [r.1.as_str(), r.2.as_str()]))?;
    let n = counts.labels.len();
    let n_edges = n * (n - 1) / 2;
    let mut wins = vec![0u32; n_edges];
    let mut trials = vec![0u32; n_edges];
    let mut seen = vec![false; n_edges];
    for (line, a, b, w, t) in rows {
        let (e, a_first) = counts.edge(&a, &b);
        if std::mem::replace(&mut seen[e], true) {
            return Err(Error::Data(format!("line {line}: duplicate pair ('{a}', '{b}')")));
        }
        trials[e] = t;
        wins[e] = if a_first { w } else { t - w };
    }
    ComparisonData::new(counts.labels, wins, trials)
}

/// Reads an edge flow from `i,j,value` rows with 1-based entity indices.
/// Every pair must appear exactly once; `(j, i)` rows are negated.
pub fn read_edge_flow(path: &Path, n_entities: Option<usize>) -> Result<EdgeFlow> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = reader(file);
    let headers = rdr.headers().map_err(data_err)?.clone();
    let (ci, cj, cv) = (column(&headers, "i")?, column(&headers, "j")?, column(&headers, "value")?);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(data_err)?;
        let line = line_of(&rec);
        let idx = |c: usize| -> Result<usize> {
            match rec.get(c).unwrap_or("").parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::Data(format!("line {line}: entity index must be a positive integer"))),
            }
        };
        let (i, j) = (idx(ci)?, idx(cj)?);
        let v: f64 = rec
            .get(cv)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Data(format!("line {line}: value is not a number")))?;
        if i == j || !v.is_finite() {
            return Err(Error::Data(format!("line {line}: invalid edge ({}, {}) or value", i + 1, j + 1)));
        }
        rows.push((line, i, j, v));
    }
    let n = match n_entities {
        Some(n) => n,
        None => rows.iter().map(|r| r.1.max(r.2) + 1).max().unwrap_or(0),
    };
    let idx = crate::complex::ComplexIndex::new(n)?;
    let mut values = DVector::zeros(idx.n_edges());
    let mut seen = vec![false; idx.n_edges()];
    for (line, i, j, v) in rows {
        let (e, sign) = idx.oriented_edge(i, j).ok_or_else(|| {
            Error::Data(format!("line {line}: edge ({}, {}) outside {n} entities", i + 1, j + 1))
        })?;
        if std::mem::replace(&mut seen[e], true) {
            return Err(Error::Data(format!("line {line}: duplicate edge ({}, {})", i + 1, j + 1)));
        }
        values[e] = sign * v;
    }
    if let Some(e) = seen.iter().position(|&s| !s) {
        let (i, j) = idx.edges()[e];
        return Err(Error::Data(format!("missing edge ({}, {})", i + 1, j + 1)));
    }
    Ok(EdgeFlow(values))
}

// ---------------------------------------------------------------- draws

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DrawsHeader {
    format_version: u32,
    model: ModelKind,
    labels: Vec<String>,
    hyperparams: Hyperparams,
}

/// Columns: `draw, s_1..s_N, w_1..w_K, sigma2, tau2`, preceded by one
/// `# {json}` metadata line.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let header = DrawsHeader {
        format_version: FORMAT_VERSION,
        model: draws.model,
        labels: draws.labels.clone(),
        hyperparams: draws.hyperparams.clone(),
    };
    let meta = serde_json::to_string(&header).expect("header serializes");
    write_atomic(path, |w| {
        writeln!(w, "# {meta}")?;
        let mut cols = vec!["draw".to_string()];
        cols.extend((1..=draws.scores.ncols()).map(|i| format!("s_{i}")));
        cols.extend((1..=draws.weights.ncols()).map(|l| format!("w_{l}")));
        cols.push("sigma2".into());
        cols.push("tau2".into());
        writeln!(w, "{}", cols.join(","))?;
        let mut line = String::new();
        for r in 0..draws.n_draws() {
            line.clear();
            line.push_str(&(r + 1).to_string());
            for v in draws.scores.row(r).iter().chain(draws.weights.row(r).iter()) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            line.push(',');
            line.push_str(&fmt_f64(draws.sigma2[r]));
            line.push(',');
            line.push_str(&fmt_f64(draws.tau2[r]));
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

/// Reloads draws written by [`write_draws`], rebuilding the operators for the
/// stored entity count.
pub fn read_draws(path: &Path) -> Result<(PosteriorDraws, OperatorSet)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufReader::new(file);
    let mut first = String::new();
    buf.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let meta = first
        .strip_prefix('#')
        .ok_or_else(|| Error::Data(format!("{}: missing '# {{...}}' metadata line", path.display())))?;
    let header: DrawsHeader = serde_json::from_str(meta.trim())
        .map_err(|e| Error::Data(format!("{}: bad metadata: {e}", path.display())))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported format_version {}",
            path.display(),
            header.format_version
        )));
    }
    let ops = OperatorSet::new(header.labels.len())?;
    let (n, k) = (ops.n_entities(), ops.n_weights());
    let mut rdr = csv::ReaderBuilder::new().from_reader(buf);
    let width = 1 + n + k + 2;
    let hdr = rdr.headers().map_err(|e| csv_err(path, e))?;
    if hdr.len() != width {
        return Err(Error::Data(format!(
            "{}: expected {width} columns for {n} entities, found {}",
            path.display(),
            hdr.len()
        )));
    }
    let mut values = Vec::new();
    let mut sigma2 = Vec::new();
    let mut tau2 = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec) + 1;
        let parse = |c: usize| -> Result<f64> {
            rec[c]
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("{}: line {line}: bad number '{}'", path.display(), &rec[c])))
        };
        for c in 1..=n + k {
            values.push(parse(c)?);
        }
        sigma2.push(parse(n + k + 1)?);
        tau2.push(parse(n + k + 2)?);
    }
    let n_draws = sigma2.len();
    let all = DMatrix::from_row_slice(n_draws, n + k, &values);
    let scores = all.columns(0, n).into_owned();
    let weights = all.columns(n, k).into_owned();
    let draws = PosteriorDraws::from_parameters(
        header.model,
        header.hyperparams,
        header.labels,
        scores,
        weights,
        sigma2,
        tau2,
        &ops,
    )?;
    Ok((draws, ops))
}

// ---------------------------------------------------------------- summaries

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    /// Seconds since the Unix epoch at write time.
    pub created_unix: u64,
    pub elapsed_seconds: f64,
}

impl RunMetadata {
    pub fn now(elapsed_seconds: f64) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            created_unix,
            elapsed_seconds,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    pub format_version: u32,
    pub model: ModelKind,
    pub labels: Vec<String>,
    pub hyperparams: Hyperparams,
    pub n_draws: usize,
    pub metadata: RunMetadata,
    pub summaries: Vec<MeasureSummary>,
}

/// Paths of the five files produced by [`write_summaries`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub draws: PathBuf,
    pub summary: PathBuf,
    pub matchup: PathBuf,
    pub vorticity: PathBuf,
    pub global_measure: PathBuf,
}

impl OutputFiles {
    pub fn for_prefix(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_os_string();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            draws: with("_draws.csv"),
            summary: with("_summary.json"),
            matchup: with("_matchup.csv"),
            vorticity: with("_vorticity.csv"),
            global_measure: with("_global_measure.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [
            &self.draws,
            &self.summary,
            &self.matchup,
            &self.vorticity,
            &self.global_measure,
        ]
    }
}

/// Writes draws, the JSON summary, posterior-mean flows, ranked vorticity and
/// the global-measure trace under `prefix`.
pub fn write_summaries(
    draws: &PosteriorDraws,
    summaries: &[MeasureSummary],
    ops: &OperatorSet,
    prefix: &Path,
) -> Result<OutputFiles> {
    if draws.n_draws() == 0 {
        return Err(Error::InvalidInput("no draws to write".into()));
    }
    let files = OutputFiles::for_prefix(prefix);
    write_draws(&files.draws, draws)?;

    let doc = SummaryFile {
        format_version: FORMAT_VERSION,
        model: draws.model,
        labels: draws.labels.clone(),
        hyperparams: draws.hyperparams.clone(),
        n_draws: draws.n_draws(),
        metadata: RunMetadata::now(draws.elapsed_seconds),
        summaries: summaries.to_vec(),
    };
    write_json(&files.summary, &doc)?;
    write_matchup(&files.matchup, draws, ops)?;

    let has_tails = |s: &&MeasureSummary| s.quantile(0.025).is_some() && s.quantile(0.975).is_some();
    let vort = match summaries
        .iter()
        .find(|s| s.quantity == Quantity::Vorticity)
        .filter(has_tails)
    {
        Some(s) => s.clone(),
        None => summarize(draws, ops, Quantity::Vorticity, &[0.025, 0.975])?,
    };
    write_vorticity(&files.vorticity, &vort, draws, ops)?;

    let trace = global_measure_trace(draws);
    write_atomic(&files.global_measure, |w| {
        writeln!(w, "draw,value")?;
        for (r, v) in trace.iter().enumerate() {
            writeln!(w, "{},{}", r + 1, fmt_f64(*v))?;
        }
        Ok(())
    })?;
    Ok(files)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serializing {}: {e}", path.display())))?;
    write_atomic(path, |w| writeln!(w, "{text}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per canonical edge `i < j` (1-based); values for `(j, i)` are the
/// negations, and the win probability is `1 - p`.
pub fn write_matchup(path: &Path, draws: &PosteriorDraws, ops: &OperatorSet) -> Result<()> {
    let flows = mean_flows(draws);
    let n = draws.n_draws() as f64;
    let win_prob: Vec<f64> = draws
        .matchup
        .column_iter()
        .map(|c| c.iter().map(|&m| logistic(m)).sum::<f64>() / n)
        .collect();
    let labels = &draws.labels;
    write_atomic(path, |w| {
        writeln!(w, "i,j,label_i,label_j,grad_mean,curl_mean,total_mean,win_prob_mean")?;
        for (e, &(i, j)) in ops.index().edges().iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                i + 1,
                j + 1,
                csv_field(&labels[i]),
                csv_field(&labels[j]),
                fmt_f64(flows.grad[e]),
                fmt_f64(flows.curl[e]),
                fmt_f64(flows.total[e]),
                fmt_f64(win_prob[e]),
            )?;
        }
        Ok(())
    })
}

/// All triads ranked by `|posterior mean|`.
pub fn write_vorticity(
    path: &Path,
    summary: &MeasureSummary,
    draws: &PosteriorDraws,
    ops: &OperatorSet,
) -> Result<()> {
    let ranked = ranked_triads(summary, ops.index(), None)?;
    let labels = &draws.labels;
    write_atomic(path, |w| {
        writeln!(
            w,
            "rank,i,j,k,label_i,label_j,label_k,mean,sd,q2.5,q97.5,ci_excludes_zero"
        )?;
        for (rank, t) in ranked.iter().enumerate() {
            let (i, j, k) = t.entities;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                rank + 1,
                i + 1,
                j + 1,
                k + 1,
                csv_field(&labels[i]),
                csv_field(&labels[j]),
                csv_field(&labels[k]),
                fmt_f64(t.mean),
                fmt_f64(t.sd),
                fmt_f64(t.lower95),
                fmt_f64(t.upper95),
                t.excludes_zero,
            )?;
        }
        Ok(())
    })
}

/// Writes `G`, `C` and `H` as headerless CSV matrices `<prefix>_grad.csv`,
/// `<prefix>_curl.csv` and `<prefix>_curl_basis.csv`.
pub fn write_operators(prefix: &Path, ops: &OperatorSet) -> Result<Vec<PathBuf>> {
    let mats = [
        ("_grad.csv", ops.grad()),
        ("_curl.csv", ops.curl()),
        ("_curl_basis.csv", ops.curl_basis()),
    ];
    let mut out = Vec::new();
    for (suffix, m) in mats {
        let mut s = prefix.as_os_str().to_os_string();
        s.push(suffix);
        let path = PathBuf::from(s);
        write_atomic(&path, |w| {
            for row in m.row_iter() {
                let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            Ok(())
        })?;
        out.push(path);
    }
    Ok(out)
}

// ---------------------------------------------------------------- studies

fn metric_rows(m: &ModelMetrics) -> Vec<(&'static str, &'static str, String, Option<f64>)> {
    let mut rows = vec![
        ("mse", "m", String::new(), Some(m.mse.m)),
        ("mse", "grad", String::new(), Some(m.mse.grad)),
        ("mse", "curl", String::new(), Some(m.mse.curl)),
        ("accuracy", "m", String::new(), Some(m.accuracy.accuracy)),
        ("zero_truth_edges", "m", String::new(), Some(m.accuracy.zero_truth_edges as f64)),
        ("global_measure_mean", "", String::new(), Some(m.mean_global_measure)),
    ];
    for c in &m.coverage {
        let level = format!("{}", c.level);
        rows.push(("coverage", "m", level.clone(), Some(c.m)));
        rows.push(("coverage", "grad", level.clone(), Some(c.grad)));
        rows.push(("coverage", "curl", level, c.curl));
    }
    for d in m.detection.iter().flatten() {
        let level = format!("{}", d.level);
        rows.push(("recall", "curl", level.clone(), d.recall));
        rows.push(("precision", "curl", level.clone(), d.precision));
        rows.push(("f1", "curl", level, d.f1));
    }
    rows
}

/// Long-format per-replication metrics. Timing is left out so the file is
/// reproducible byte for byte.
pub fn write_study_csv(path: &Path, report: &StudyReport) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "replication,model,metric,component,level,value")?;
        for rep in &report.replications {
            let models = std::iter::once((ModelKind::Bibt, &rep.bibt))
                .chain(rep.baseline.as_ref().map(|b| (ModelKind::Baseline, b)));
            for (kind, outcome) in models {
                match outcome {
                    ModelOutcome::Ok(m) => {
                        for (metric, comp, level, value) in metric_rows(m) {
                            writeln!(
                                w,
                                "{},{},{metric},{comp},{level},{}",
                                rep.replication + 1,
                                kind.as_str(),
                                fmt_opt(value)
                            )?;
                        }
                    }
                    ModelOutcome::Failed(_) => {
                        writeln!(w, "{},{},failed,,,NA", rep.replication + 1, kind.as_str())?;
                    }
                }
            }
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct StudyDocument<'a> {
    format_version: u32,
    metadata: RunMetadata,
    #[serde(flatten)]
    report: &'a StudyReport,
}

pub fn write_study_json(path: &Path, report: &StudyReport, elapsed_seconds: f64) -> Result<()> {
    write_json(
        path,
        &StudyDocument {
            format_version: FORMAT_VERSION,
            metadata: RunMetadata::now(elapsed_seconds),
            report,
        },
    )
}

/// Aggregated metric rows for one study, named like `cp90_m` or `recall_0.95`.
pub fn aggregate_rows(report: &StudyReport) -> Vec<(ModelKind, String, Option<f64>)> {
    let mut rows = Vec::new();
    for agg in std::iter::once(&report.bibt).chain(report.baseline.as_ref()) {
        let mut push = |name: String, v: Option<f64>| rows.push((agg.model, name, v));
        push("mse_m".into(), agg.mse.map(|m| m.m));
        push("mse_grad".into(), agg.mse.map(|m| m.grad));
        push("mse_curl".into(), agg.mse.map(|m| m.curl));
        push("accuracy".into(), agg.accuracy);
        push("global_measure_mean".into(), agg.mean_global_measure);
        for c in &agg.coverage {
            let pct = (c.level * 100.0).round() as u32;
            push(format!("cp{pct}_m"), c.m);
            push(format!("cp{pct}_grad"), c.grad);
            push(format!("cp{pct}_curl"), c.curl);
        }
        for d in &agg.detection {
            push(format!("recall_{}", d.level), d.recall);
            push(format!("precision_{}", d.level), d.precision);
            push(format!("f1_{}", d.level), d.f1);
        }
        push("failed_replications".into(), Some(agg.failed as f64));
    }
    rows
}

/// Columns `sparsity, model, metric, value`, one block per study.
pub fn write_sweep_csv(path: &Path, reports: &[StudyReport]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "sparsity,model,metric,value")?;
        for r in reports {
            for (model, metric, value) in aggregate_rows(r) {
                writeln!(w, "{},{},{metric},{}", r.config.sparsity, model.as_str(), fmt_opt(value))?;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{summarize_all, DEFAULT_LEVELS};
    use crate::sampler::run_chain;

    fn games(rows: &str) -> Result<ComparisonData> {
        parse_game_log(format!("winner,loser,date\n{rows}").as_bytes())
    }

    #[test]
    fn game_log_aggregation() {
        let d = games("A,B,\nB,A,2021-04-01\nA,C,\nC,B,\n").unwrap();
        assert_eq!(d.labels(), &["A", "B", "C"]);
        assert_eq!(d.wins(), &[1, 1, 0]);
        assert_eq!(d.trials(), &[2, 1, 1]);
    }

    #[test]
    fn game_log_errors() {
        let e = games("").unwrap_err();
        assert!(e.to_string().contains("no entities"), "{e}");
        let e = games("A,B,\nC,C,\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(matches!(games("A,B,\nA,,\n"), Err(Error::Data(_))));
        assert!(matches!(games("A,B\n"), Err(Error::Data(_))));
        assert!(parse_game_log("who,lost\nA,B\n".as_bytes()).is_err());
    }

    #[test]
    fn aggregation_is_order_independent() {
        let rows = ["A,B,", "B,C,", "C,A,", "A,B,", "D,A,", "B,D,"];
        let a = games(&(rows.join("\n") + "\n")).unwrap();
        let mut rev = rows.to_vec();
        rev.reverse();
        let b = games(&(rev.join("\n") + "\n")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_entities(), 4);
        assert_eq!(a.trials().iter().sum::<u32>(), 6);
    }

    #[test]
    fn aggregated_format() {
        let text = "label_i,label_j,wins_i,trials\nA,B,3,5\nC,A,1,4\nB,C,0,0\n";
        let d = parse_aggregated(text.as_bytes()).unwrap();
        assert_eq!(d.wins(), &[3, 3, 0]);
        assert_eq!(d.trials(), &[5, 4, 0]);

        let dup = "label_i,label_j,wins_i,trials\nA,B,3,5\nB,A,1,4\nB,C,0,0\n";
        let e = parse_aggregated(dup.as_bytes()).unwrap_err();
        assert!(e.to_string().contains("duplicate"), "{e}");
        let over = "label_i,label_j,wins_i,trials\nA,B,6,5\nB,C,0,0\n";
        assert!(parse_aggregated(over.as_bytes()).is_err());
        let bad = "label_i,label_j,wins_i,trials\nA,B,x,5\nB,C,0,0\n";
        assert!(parse_aggregated(bad.as_bytes()).unwrap_err().to_string().contains("line 2"));
        assert!("parquet".parse::<InputFormat>().is_err());
    }

    fn sample_draws() -> (PosteriorDraws, OperatorSet) {
        let ops = OperatorSet::new(4).unwrap();
        let data = ComparisonData::new(
            vec!["ant".into(), "bee".into(), "cat".into(), "d,og".into()],
            vec![6, 3, 8, 2, 5, 7],
            vec![10; 6],
        )
        .unwrap();
        let hp = Hyperparams {
            n_iterations: 60,
            burn_in: 10,
            seed: 5,
            ..Hyperparams::default()
        };
        (run_chain(&data, &hp, &ops).unwrap(), ops)
    }

    #[test]
    fn draws_round_trip_exactly() {
        let (draws, _) = sample_draws();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x_draws.csv");
        write_draws(&path, &draws).unwrap();
        let (back, ops) = read_draws(&path).unwrap();
        assert_eq!(ops.n_entities(), 4);
        assert_eq!(back.scores, draws.scores);
        assert_eq!(back.weights, draws.weights);
        assert_eq!(back.sigma2, draws.sigma2);
        assert_eq!(back.tau2, draws.tau2);
        assert_eq!(back.labels, draws.labels);
        assert_eq!(back.model, draws.model);
        assert_eq!(back.hyperparams, draws.hyperparams);
    }

    #[test]
    fn summary_files_have_expected_shape() {
        let (draws, ops) = sample_draws();
        let sums = summarize_all(&draws, &ops, &DEFAULT_LEVELS).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_summaries(&draws, &sums, &ops, &dir.path().join("run")).unwrap();
        for p in files.all() {
            assert!(p.exists(), "{}", p.display());
        }
        let count = |p: &Path| std::fs::read_to_string(p).unwrap().lines().count();
        assert_eq!(count(&files.matchup), 1 + 6);
        assert_eq!(count(&files.vorticity), 1 + 4);
        assert_eq!(count(&files.global_measure), 1 + draws.n_draws());
        assert_eq!(count(&files.draws), 2 + draws.n_draws());

        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files.summary).unwrap()).unwrap();
        assert_eq!(doc["format_version"], 1);
        assert_eq!(doc["summaries"].as_array().unwrap().len(), 6);
        let first = &doc["summaries"][0];
        for key in ["quantity", "component_labels", "mean", "sd", "quantiles", "flags"] {
            assert!(first.get(key).is_some(), "{key}");
        }
        let matchup = std::fs::read_to_string(&files.matchup).unwrap();
        assert!(matchup.contains("\"d,og\""));
        let mut rdr = csv::Reader::from_path(&files.matchup).unwrap();
        for rec in rdr.records() {
            assert_eq!(rec.unwrap().len(), 8);
        }
    }

    #[test]
    fn edge_flow_reader() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "i,j,value\n1,2,1.5\n3,1,2\n2,3,-1\n").unwrap();
        let m = read_edge_flow(&p, None).unwrap();
        assert_eq!(m.0.as_slice(), &[1.5, -2.0, -1.0]);
        std::fs::write(&p, "i,j,value\n1,2,1.5\n2,1,2\n2,3,-1\n").unwrap();
        assert!(read_edge_flow(&p, None).is_err());
        std::fs::write(&p, "i,j,value\n1,2,1.5\n2,3,-1\n").unwrap();
        assert!(read_edge_flow(&p, None).is_err());
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let (draws, _) = sample_draws();
        let e = write_draws(Path::new("/nonexistent-dir/x.csv"), &draws).unwrap_err();
        assert_eq!(e.kind(), "io");
    }
}
