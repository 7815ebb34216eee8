use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use rcit::citest::TestKind;
use rcit::discovery::{
    cpdag_of_dag, pc, structural_hamming_distance, CiTest, Cpdag, DagJson, DataCiTest, Edge, OracleCiTest,
};
use rcit::eval::{
    random_weight_sets, run_null_accuracy, run_runtime_benchmark, run_suite, DesignKind, ExperimentReport,
    NullAccuracyReport, NullAccuracyRow, RuntimeRow, TestSpec,
};
use rcit::seed::rng_for;
use rcit::synth::{
    apply_latent_and_selection_with, gen_pnl_alt, gen_pnl_null, gen_random_dag, simulate_dag_data, SelectionMetadata,
};
use rcit::{ApproxMethod, DataMatrix};

use crate::args::{BenchArgs, BenchNullArgs, DagArgs, DiscoverArgs, FeatureArgs, PnlArgs, SuiteArgs, TestArgs};
use crate::error::{CliError, CliResult};
use crate::io::{
    emit_json, file_name, parse_f64_list, parse_usize_list, read_csv, sidecar_path, split_names, write_data_csv,
    write_rows_csv, write_text,
};
use crate::manifest::RunManifest;

/// `rcot`, `rcit-perm`, `fisher-z`, ...; the approximation defaults to LPB.
fn parse_test(label: &str, features: &FeatureArgs, seed: u64) -> CliResult<TestSpec> {
    let label = label.trim().to_ascii_lowercase();
    let (kind, approx) = match label.as_str() {
        "fisher-z" | "fisherz" => (TestKind::FisherZ, ApproxMethod::Lpb),
        _ => match label.split_once('-') {
            Some((k, a)) => (k.parse()?, a.parse()?),
            None => (label.parse()?, ApproxMethod::Lpb),
        },
    };
    Ok(TestSpec::with_config(kind, features.config(approx, seed)))
}

fn parse_tests(list: &str, features: &FeatureArgs) -> CliResult<Vec<TestSpec>> {
    let tests = split_names(list)
        .iter()
        .map(|t| parse_test(t, features, 0))
        .collect::<CliResult<Vec<_>>>()?;
    if tests.is_empty() {
        return Err(CliError::input("no tests given"));
    }
    Ok(tests)
}

fn columns(data: &DataMatrix, spec: &str, flag: &str) -> CliResult<DataMatrix> {
    let names = split_names(spec);
    if names.is_empty() {
        return Err(CliError::input(format!("{flag} names no columns")));
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    data.select_named(&refs)
        .map_err(|e| CliError::input(format!("{flag}: {e}")))
}

#[derive(Serialize)]
struct TestOutput {
    statistic: f64,
    p_value: f64,
    method: String,
    approx: Option<ApproxMethod>,
    n: usize,
    eigenvalue_count: usize,
    fallback: bool,
    elapsed_ms: f64,
    seed: u64,
    x: Vec<String>,
    y: Vec<String>,
    z: Vec<String>,
    manifest: RunManifest,
}

pub fn test(a: &TestArgs) -> CliResult<()> {
    let manifest = RunManifest::start("test", a, a.seed);
    let data = read_csv(&a.data)?;
    let x = columns(&data, &a.x, "--x")?;
    let y = columns(&data, &a.y, "--y")?;
    let z = match &a.z {
        Some(z) => columns(&data, z, "--z")?,
        None => DataMatrix::empty(data.n()),
    };
    let cfg = a.features.config(a.approx, a.seed);
    let r = a.method.run(&x, &y, &z, &cfg)?;
    let out = TestOutput {
        statistic: r.statistic,
        p_value: r.p_value,
        method: r.method,
        approx: r.approx,
        n: r.n,
        eigenvalue_count: r.eigenvalues.len(),
        fallback: r.fallback_flag,
        elapsed_ms: r.elapsed.as_secs_f64() * 1e3,
        seed: a.seed,
        x: x.column_names().to_vec(),
        y: y.column_names().to_vec(),
        z: z.column_names().to_vec(),
        manifest: manifest.finish(),
    };
    emit_json(a.out.as_deref(), &out)
}

#[derive(Serialize)]
struct PnlSidecar {
    generator: &'static str,
    data_file: String,
    n: usize,
    k: usize,
    g1: String,
    g2: String,
    columns: Vec<String>,
    manifest: RunManifest,
}

pub fn synth_pnl(a: &PnlArgs, alt: bool) -> CliResult<()> {
    let generator = if alt { "pnl-alt" } else { "pnl-null" };
    let manifest = RunManifest::start(&format!("synth {generator}"), a, a.seed);
    let mut rng = rng_for(a.seed, 0);
    let s = if alt {
        gen_pnl_alt(a.n, a.k, &mut rng)?
    } else {
        gen_pnl_null(a.n, a.k, &mut rng)?
    };
    let data = s.to_data()?;
    write_data_csv(&a.out, &data)?;
    let sidecar = PnlSidecar {
        generator,
        data_file: file_name(&a.out),
        n: a.n,
        k: a.k,
        g1: s.g1.to_string(),
        g2: s.g2.to_string(),
        columns: data.column_names().to_vec(),
        manifest: manifest.finish(),
    };
    emit_json(Some(&sidecar_path(&a.out)), &sidecar)
}

#[derive(Serialize)]
struct DagSidecar {
    generator: &'static str,
    data_file: String,
    n: usize,
    rows: usize,
    nonlinear: bool,
    dag: DagJson,
    selection: SelectionMetadata,
    columns: Vec<String>,
    manifest: RunManifest,
}

pub fn synth_dag(a: &DagArgs) -> CliResult<()> {
    let manifest = RunManifest::start("synth dag", a, a.seed);
    let dag = gen_random_dag(a.v, a.en, &mut rng_for(a.seed, 0))?;
    let full = simulate_dag_data(&dag, a.n, a.nonlinear, &mut rng_for(a.seed, 1))?;
    let (data, selection) =
        apply_latent_and_selection_with(&full, &dag, a.latents, a.selection, &mut rng_for(a.seed, 2))?;
    write_data_csv(&a.out, &data)?;
    let sidecar = DagSidecar {
        generator: "dag",
        data_file: file_name(&a.out),
        n: a.n,
        rows: data.n(),
        nonlinear: a.nonlinear,
        dag: DagJson::from_dag(&dag),
        selection,
        columns: data.column_names().to_vec(),
        manifest: manifest.finish(),
    };
    emit_json(Some(&sidecar_path(&a.out)), &sidecar)
}

#[derive(Serialize)]
struct SuiteOutput {
    reports: Vec<ExperimentReport>,
    manifest: RunManifest,
}

pub fn suite(command: &str, a: &SuiteArgs) -> CliResult<()> {
    let manifest = RunManifest::start(command, a, a.seed);
    let tests = parse_tests(&a.tests, &a.features)?;
    let sizes = parse_usize_list(&a.n)?;
    let ks = parse_usize_list(&a.k)?;
    let kind = match command {
        "calibrate" => DesignKind::Null,
        "power" => DesignKind::Alt,
        _ => DesignKind::Perm,
    };
    let reports = run_suite(kind, &tests, &sizes, &ks, a.trials, a.seed)?;
    if let Some(path) = &a.csv {
        let mut text = format!("{}\n", ExperimentReport::CSV_HEADER);
        for r in &reports {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        write_text(path, &text)?;
    }
    emit_json(
        a.out.as_deref(),
        &SuiteOutput {
            reports,
            manifest: manifest.finish(),
        },
    )
}

#[derive(Serialize)]
struct BenchOutput {
    rows: Vec<RuntimeRow>,
    manifest: RunManifest,
}

pub fn bench(a: &BenchArgs) -> CliResult<()> {
    let manifest = RunManifest::start("bench", a, a.seed);
    let tests = parse_tests(&a.tests, &a.features)?;
    let sizes = parse_usize_list(&a.sizes)?;
    let rows = run_runtime_benchmark(&tests, &sizes, a.repeats, a.seed)?;
    if let Some(path) = &a.csv {
        write_rows_csv(path, &rows)?;
    }
    emit_json(
        a.out.as_deref(),
        &BenchOutput {
            rows,
            manifest: manifest.finish(),
        },
    )
}

#[derive(Serialize)]
struct BenchNullOutput {
    #[serde(flatten)]
    report: NullAccuracyReport,
    manifest: RunManifest,
}

/// Flat CSV form of [`NullAccuracyRow`]: `monte_carlo` columns are empty
/// when no draws were requested.
#[derive(Serialize)]
struct NullAccuracyCsvRow {
    set: usize,
    num_weights: usize,
    level: f64,
    quantile: f64,
    imhof: f64,
    sw: f64,
    hbe: f64,
    woodf: f64,
    woodf_fallback: bool,
    lpb: f64,
    lpb_fallback: bool,
    monte_carlo: Option<f64>,
    monte_carlo_z: Option<f64>,
}

impl From<&NullAccuracyRow> for NullAccuracyCsvRow {
    fn from(r: &NullAccuracyRow) -> Self {
        NullAccuracyCsvRow {
            set: r.set,
            num_weights: r.num_weights,
            level: r.level,
            quantile: r.quantile,
            imhof: r.imhof,
            sw: r.sw,
            hbe: r.hbe,
            woodf: r.woodf,
            woodf_fallback: r.woodf_fallback,
            lpb: r.lpb,
            lpb_fallback: r.lpb_fallback,
            monte_carlo: r.monte_carlo,
            monte_carlo_z: r.monte_carlo_z,
        }
    }
}

pub fn bench_null(a: &BenchNullArgs) -> CliResult<()> {
    let manifest = RunManifest::start("bench-null", a, a.seed);
    let sets: Vec<Vec<f64>> = if a.weights == "random" {
        random_weight_sets(a.sets, a.max_len, a.seed)?
    } else {
        let text = fs::read_to_string(&a.weights).map_err(|e| CliError::input(format!("{}: {e}", a.weights)))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", a.weights)))?
    };
    let levels = parse_f64_list(&a.levels)?;
    let report = run_null_accuracy(&sets, &levels, a.mc_draws, a.seed)?;
    if let Some(path) = &a.csv {
        let rows: Vec<NullAccuracyCsvRow> = report.rows.iter().map(Into::into).collect();
        write_rows_csv(path, &rows)?;
    }
    emit_json(
        a.out.as_deref(),
        &BenchNullOutput {
            report,
            manifest: manifest.finish(),
        },
    )
}

/// A bare `{vertex_names, edges}` document or a `synth dag` sidecar.
fn read_truth(path: &Path) -> CliResult<DagJson> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if let Some(inner) = doc.get_mut("dag") {
        doc = inner.take();
    }
    serde_json::from_value(doc).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// `truth` with its vertices listed in the order of `names`.
fn align(truth: &Cpdag, names: &[String]) -> CliResult<Cpdag> {
    let theirs = truth.vertex_names();
    let mismatch = || CliError::input("vertices of the true DAG do not match the data columns");
    if theirs.len() != names.len() {
        return Err(mismatch());
    }
    let position = |name: &String| names.iter().position(|n| n == name).ok_or_else(mismatch);
    let edges = truth
        .index_edges()
        .into_iter()
        .map(|(i, j, m)| Ok((position(&theirs[i])?, position(&theirs[j])?, m)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Cpdag::from_index_edges(names.to_vec(), &edges)?)
}

#[derive(Serialize)]
struct Sepset {
    x: String,
    y: String,
    set: Vec<String>,
}

#[derive(Serialize)]
struct DiscoverOutput {
    test: String,
    alpha: f64,
    vertex_names: Vec<String>,
    edges: Vec<Edge>,
    num_tests: usize,
    sepsets: Vec<Sepset>,
    shd: Option<usize>,
    elapsed_ms: f64,
    manifest: RunManifest,
}

pub fn discover(a: &DiscoverArgs) -> CliResult<()> {
    let manifest = RunManifest::start("discover", a, a.seed);
    let truth = a
        .truth
        .as_deref()
        .map(read_truth)
        .transpose()?
        .map(|t| t.to_dag())
        .transpose()?;
    let data = a.data.as_deref().map(read_csv).transpose()?;
    let oracle = a.test.trim().eq_ignore_ascii_case("oracle");
    let spec = if oracle {
        None
    } else {
        Some(parse_test(&a.test, &a.features, a.seed)?)
    };
    let start = Instant::now();
    let out = match (&spec, &data, &truth) {
        (None, _, Some(dag)) => pc(&OracleCiTest { dag }, a.alpha, a.max_cond)?,
        (None, _, None) => return Err(CliError::input("--test oracle needs --truth")),
        (Some(spec), Some(data), _) => pc(&DataCiTest::new(data, spec) as &dyn CiTest, a.alpha, a.max_cond)?,
        (Some(_), None, _) => return Err(CliError::input("--data is required for data-driven tests")),
    };
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let names = out.cpdag.vertex_names().to_vec();
    let shd = match &truth {
        Some(dag) => Some(structural_hamming_distance(
            &out.cpdag,
            &align(&cpdag_of_dag(dag), &names)?,
        )?),
        None => None,
    };
    if let Some(path) = &a.adjacency_csv {
        write_text(path, &out.cpdag.to_adjacency_csv())?;
    }
    let sepsets = out
        .sepsets
        .iter()
        .map(|(&(i, j), s)| Sepset {
            x: names[i].clone(),
            y: names[j].clone(),
            set: s.iter().map(|&k| names[k].clone()).collect(),
        })
        .collect();
    let doc = DiscoverOutput {
        test: spec.as_ref().map_or_else(|| "oracle".into(), TestSpec::label),
        alpha: a.alpha,
        edges: out.cpdag.edges(),
        vertex_names: names,
        num_tests: out.num_tests,
        sepsets,
        shd,
        elapsed_ms,
        manifest: manifest.finish(),
    };
    emit_json(a.out.as_deref(), &doc)
}
