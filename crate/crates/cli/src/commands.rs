use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use wfbench_core::classifier::{
    cnn_train, evaluate_closed, knn_fit, CnnArchitecture, CnnModel, Model, TrainConfig, DEFAULT_FEATURE_LEN,
};
use wfbench_core::dataset_csv::{parse_provenance, read_csv_dataset, write_csv_dataset, write_provenance};
use wfbench_core::defense::{defend_dataset, observed_dataset};
use wfbench_core::experiment::{
    ClassifierConfig, ClosedWorldBench, DefenseKind, ExperimentConfig, OpenWorldBench,
};
use wfbench_core::faa::{build_filter, Filter};
use wfbench_core::metrics::{overhead, roc, threshold_grid, write_plot_csv, PlotRow, DEFAULT_HEADER_BYTES};
use wfbench_core::pcap::{parse_pcap_with_max, ClientIdentity};
use wfbench_core::stats::{build_histogram, top_x, DEFAULT_X};
use wfbench_core::synth::{gen_open_world, WorldConfig};
use wfbench_core::{Dataset, Label, Trace, World};

use crate::config::{self, invalid, FileConfig};
use crate::{
    AttackFilterArgs, Cli, Command, DefendArgs, EvalArgs, ExperimentArgs, IngestArgs, ModelArgs, RocArgs, StatsArgs,
    SweepArgs, SynthArgs, TrainArgs,
};

const DEFAULT_K: usize = 3;
const HISTOGRAM_HEADER: &str = "# wfbench-histogram v1";
const FILTER_HEADER: &str = "# wfbench-filter-list v1";
const LOSS_HEADER: &str = "# wfbench-train-loss v1";
const DE_HEADER: &str = "# wfbench-de v1";

struct Ctx {
    file: FileConfig,
    out_dir: Option<PathBuf>,
}

impl Ctx {
    /// Output path, resolved against the output directory and with parents
    /// created.
    fn out(&self, p: &Path) -> Result<PathBuf> {
        let p = match &self.out_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        };
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(p)
    }

    fn create(&self, p: &Path) -> Result<(PathBuf, BufWriter<File>)> {
        let p = self.out(p)?;
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok((p, BufWriter::new(f)))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let ctx = Ctx { file: config::load(cli.config.as_deref())?, out_dir: cli.out_dir };
    match cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Defend(a) => defend(&ctx, a),
        Command::AttackFilter(a) => attack_filter(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Roc(a) => roc_cmd(&ctx, a),
    }
}

fn read(path: &Path) -> Result<Dataset> {
    read_csv_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let f = &ctx.file.synth;
    let d = WorldConfig::default();
    let cfg = WorldConfig {
        num_sites: a.sites.or(f.sites).unwrap_or(d.num_sites),
        traces_per_site: a.per_site.or(f.per_site).unwrap_or(d.traces_per_site),
        min_len: a.min_len.or(f.min_len).unwrap_or(d.min_len),
        max_len: a.max_len.or(f.max_len).unwrap_or(d.max_len),
        signature_len: a.signature_len.or(f.signature_len).unwrap_or(d.signature_len),
        drop_prob: a.drop_prob.or(f.drop_prob).unwrap_or(d.drop_prob),
        resize_prob: a.resize_prob.or(f.resize_prob).unwrap_or(d.resize_prob),
        seed: a.seed,
        alphabet: d.alphabet,
    };
    let ds = gen_open_world(&cfg, a.unmonitored.or(f.unmonitored).unwrap_or(0))?;
    let out = ctx.out(&a.output)?;
    write_csv_dataset(&ds, &out)?;
    log::info!("wrote {} traces ({} classes) to {}", ds.len(), ds.class_count(), out.display());
    Ok(())
}

/// `<label>_<n>.pcap` with a numeric or `unmon` label.
fn visit_name(path: &Path) -> Option<(Label, u64)> {
    if path.extension()? != "pcap" {
        return None;
    }
    let (label, n) = path.file_stem()?.to_str()?.rsplit_once('_')?;
    let n = n.parse().ok()?;
    let label = match label {
        wfbench_core::dataset_csv::UNMONITORED => Label::Unmonitored,
        l => Label::Monitored(l.parse().ok()?),
    };
    Some((label, n))
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let who: ClientIdentity = a.client.parse()?;
    let entries = fs::read_dir(&a.dir).with_context(|| format!("reading {}", a.dir.display()))?;
    let mut visits = Vec::new();
    for e in entries {
        let path = e?.path();
        match visit_name(&path) {
            Some((label, n)) => visits.push((label, n, path)),
            None if path.is_file() => log::warn!("skipping {}: not named <label>_<n>.pcap", path.display()),
            None => {}
        }
    }
    // Monitored sites in index order, unmonitored last.
    visits.sort_by_key(|(l, n, _)| (l.site_index().unwrap_or(usize::MAX), *n));
    let mut traces = Vec::new();
    for (label, _, path) in visits {
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        match parse_pcap_with_max(&bytes, who, a.max_wire_size) {
            Ok(t) => traces.push(t.with_label(Some(label))),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if traces.is_empty() {
        return Err(invalid(format!("no usable captures in {}", a.dir.display())));
    }
    let classes = traces.iter().filter_map(|t| t.label().and_then(Label::site_index)).max().map_or(1, |m| m + 1);
    let world = if traces.iter().any(|t| t.label() == Some(Label::Unmonitored)) { World::Open } else { World::Closed };
    let ds = Dataset::new(traces, classes, world)?;
    let out = ctx.out(&a.output)?;
    write_csv_dataset(&ds, &out)?;
    log::info!("wrote {} traces to {}", ds.len(), out.display());
    Ok(())
}

fn stats(ctx: &Ctx, a: StatsArgs) -> Result<()> {
    let ds = read(&a.dataset)?;
    let h = build_histogram(&ds)?;
    let x = a.x.or(ctx.file.experiment.attack_x).unwrap_or(DEFAULT_X);
    let list = top_x(&h, x)?;
    let mass: f64 = list.sizes().iter().map(|&s| h.probability(s)).sum();
    println!("packets {}  distinct sizes {}  top-{x} mass {mass:.4}", h.total(), h.distinct());
    for (rank, (s, p)) in list.entries().take(10).enumerate() {
        println!("{:>4} {s:>6}  corpus {:.4}  list {p:.4}", rank + 1, h.probability(s));
    }
    if let Some(p) = &a.histogram {
        let (_, mut w) = ctx.create(p)?;
        writeln!(w, "{HISTOGRAM_HEADER}")?;
        h.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &a.filter {
        let (_, mut w) = ctx.create(p)?;
        writeln!(w, "{FILTER_HEADER}")?;
        list.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn experiment_config(ctx: &Ctx, exp: &ExperimentArgs, model: &ModelArgs, grid: Option<Vec<f64>>, seed: u64) -> Result<ExperimentConfig> {
    let f = &ctx.file.experiment;
    let d = ExperimentConfig::default();
    let grid = grid.or_else(|| f.grid.clone()).unwrap_or(d.grid);
    if grid.is_empty() || grid.iter().any(|p| !(0.0..=1.0).contains(p)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("P_t grid must be strictly increasing within [0, 1], got {grid:?}")));
    }
    let split_ratio = exp.split_ratio.or(f.split_ratio).unwrap_or(d.split_ratio);
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(invalid(format!("split ratio must lie in (0, 1), got {split_ratio}")));
    }
    Ok(ExperimentConfig {
        feature_len: model.feature_len.or(f.feature_len).unwrap_or(d.feature_len),
        classifier: classifier_config(ctx, model, seed)?,
        attack_x: exp.attack_x.or(f.attack_x).unwrap_or(d.attack_x),
        defense_x: exp.defense_x.or(f.defense_x).unwrap_or(d.defense_x),
        split_min: exp.split_min.or(f.split_min).unwrap_or(d.split_min),
        header_bytes: exp.header_bytes.or(f.header_bytes).unwrap_or(d.header_bytes),
        grid,
        split_ratio,
        seed,
    })
}

fn train_config(ctx: &Ctx, m: &ModelArgs, seed: u64) -> TrainConfig {
    let f = &ctx.file.train;
    let d = TrainConfig::default();
    TrainConfig {
        epochs: m.epochs.or(f.epochs).unwrap_or(d.epochs),
        batch_size: m.batch_size.or(f.batch_size).unwrap_or(d.batch_size),
        learning_rate: m.learning_rate.or(f.learning_rate).unwrap_or(d.learning_rate),
        beta1: f.beta1.unwrap_or(d.beta1),
        beta2: f.beta2.unwrap_or(d.beta2),
        epsilon: f.epsilon.unwrap_or(d.epsilon),
        seed,
        ..d
    }
}

fn channels(ctx: &Ctx, m: &ModelArgs) -> Vec<usize> {
    m.channels
        .clone()
        .or_else(|| ctx.file.classifier.channels.clone())
        .unwrap_or_else(|| vec![32, 64, 128, 256])
}

fn classifier_config(ctx: &Ctx, m: &ModelArgs, seed: u64) -> Result<ClassifierConfig> {
    let kind = m.classifier.clone().or_else(|| ctx.file.classifier.kind.clone()).unwrap_or_else(|| "cnn".into());
    match kind.as_str() {
        "cnn" => Ok(ClassifierConfig::Cnn { channels: channels(ctx, m), train: train_config(ctx, m, seed) }),
        "knn" => Ok(ClassifierConfig::Knn { k: m.k.or(ctx.file.classifier.k).unwrap_or(DEFAULT_K) }),
        other => Err(invalid(format!("unknown classifier {other:?} (expected cnn or knn)"))),
    }
}

fn defend(ctx: &Ctx, a: DefendArgs) -> Result<()> {
    let ds = read(&a.dataset)?;
    let kind: DefenseKind = a.defense.parse()?;
    let corpus = match &a.corpus {
        Some(p) => read(p)?,
        None => ds.clone(),
    };
    let x = a.x.or(ctx.file.experiment.defense_x).unwrap_or(DEFAULT_X);
    let split_min = a.split_min.or(ctx.file.experiment.split_min).unwrap_or(wfbench_core::defense::DEFAULT_SPLIT_MIN);
    let defense = defense_for(kind, a.p_t, &corpus, x, split_min)?;
    let defended = defend_dataset(&ds, &defense, a.seed)?;
    let observed = observed_dataset(&ds, &defended)?;
    let out = ctx.out(&a.output)?;
    write_csv_dataset(&observed, &out)?;
    let prov = match a.provenance {
        Some(p) => ctx.out(&p)?,
        None => PathBuf::from(format!("{}.prov", out.display())),
    };
    let mut w = BufWriter::new(File::create(&prov).with_context(|| format!("creating {}", prov.display()))?);
    write_provenance(&defended, &mut w)?;
    w.flush()?;
    let h = ctx.file.experiment.header_bytes.unwrap_or(DEFAULT_HEADER_BYTES);
    println!("{} at P_t={}: overhead {:.6}", kind.name(), a.p_t, overhead(&ds, &defended, h)?);
    Ok(())
}

fn defense_for(
    kind: DefenseKind,
    p_t: f64,
    corpus: &Dataset,
    x: usize,
    split_min: u32,
) -> Result<wfbench_core::defense::Defense> {
    use wfbench_core::defense::{Defense, LadConfig, RpdConfig};
    Ok(match kind {
        DefenseKind::None => Defense::None,
        DefenseKind::Rpd(r) => Defense::Rpd(RpdConfig::preset(p_t, r)?),
        DefenseKind::LadInsert => Defense::Lad(LadConfig::insert(p_t, build_filter(corpus, x)?)?),
        DefenseKind::LadSplit => Defense::Lad(LadConfig::split(p_t, split_min, build_filter(corpus, x)?)?),
    })
}

fn attack_filter(ctx: &Ctx, a: AttackFilterArgs) -> Result<()> {
    let ds = read(&a.dataset)?;
    let corpus = read(&a.corpus)?;
    let x = a.x.or(ctx.file.experiment.attack_x).unwrap_or(DEFAULT_X);
    let list = build_filter(&corpus, x)?;
    let filtered = Filter::new(&list)?.apply_dataset(&ds)?;
    let before: usize = ds.traces().iter().map(Trace::len).sum();
    let after: usize = filtered.traces().iter().map(Trace::len).sum();
    let out = ctx.out(&a.output)?;
    write_csv_dataset(&filtered, &out)?;
    println!("kept {after} of {before} packets");
    Ok(())
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    if let ClassifierConfig::Knn { .. } = classifier_config(ctx, &a.model, a.seed)? {
        return Err(invalid("k-NN has no training step; use `eval --knn-train`"));
    }
    let ds = closed_part(&read(&a.dataset)?)?;
    let len = a.model.feature_len.or(ctx.file.experiment.feature_len).unwrap_or(DEFAULT_FEATURE_LEN);
    let arch = CnnArchitecture::with_channels(len, ds.class_count(), channels(ctx, &a.model));
    let (model, report) = cnn_train(&ds, &arch, &train_config(ctx, &a.model, a.seed))?;
    let out = ctx.out(&a.output)?;
    model.save(&out)?;
    if let Some(p) = &a.loss_csv {
        let (_, mut w) = ctx.create(p)?;
        writeln!(w, "{LOSS_HEADER}")?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    println!("loss {:.6} -> {:.6}; checkpoint {}", report.initial_loss, report.final_loss, out.display());
    Ok(())
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let ds = read(&a.dataset)?;
    let model = match (&a.model, &a.knn_train) {
        (Some(p), _) => {
            Model::Cnn(CnnModel::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?)
        }
        (None, Some(p)) => {
            let train = closed_part(&read(p)?)?;
            let len = a.feature_len.or(ctx.file.experiment.feature_len).unwrap_or(DEFAULT_FEATURE_LEN);
            let k = a.k.or(ctx.file.classifier.k).unwrap_or(DEFAULT_K);
            Model::Knn(knn_fit(&train, len, k)?)
        }
        (None, None) => unreachable!("clap requires one of --model / --knn-train"),
    };
    if model.class_count() != ds.class_count() {
        return Err(wfbench_core::Error::ShapeMismatch(format!(
            "model has {} classes, dataset has {}",
            model.class_count(),
            ds.class_count()
        ))
        .into());
    }
    let r = evaluate_closed(&model, &closed_part(&ds)?)?;
    let correct: usize = (0..r.confusion.len()).map(|i| r.confusion[i][i]).sum();
    println!("accuracy {:.6} ({correct}/{})", r.accuracy, r.total);
    if let (Some(orig), Some(prov)) = (&a.original, &a.provenance) {
        let original = read(orig)?;
        let text = fs::read_to_string(prov).with_context(|| format!("reading {}", prov.display()))?;
        let defended = parse_provenance(&ds, &text)?;
        let h = a.header_bytes.or(ctx.file.experiment.header_bytes).unwrap_or(DEFAULT_HEADER_BYTES);
        println!("overhead {:.6}", overhead(&original, &defended, h)?);
    }
    Ok(())
}

/// The monitored rows of a dataset, as a closed world.
fn closed_part(ds: &Dataset) -> Result<Dataset> {
    let mon: Vec<Trace> = ds.traces().iter().filter(|t| t.label().is_some_and(Label::is_monitored)).cloned().collect();
    if mon.len() < ds.len() {
        log::info!("ignoring {} unmonitored traces", ds.len() - mon.len());
    }
    Ok(Dataset::new(mon, ds.class_count(), World::Closed)?)
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let cfg = experiment_config(ctx, &a.exp, &a.model, a.grid.clone(), a.seed)?;
    let names = a.defenses.clone().or_else(|| ctx.file.experiment.defenses.clone()).unwrap_or_else(|| {
        ["rpd-small", "rpd-medium", "rpd-large", "lad-insert", "lad-split"].map(String::from).to_vec()
    });
    let kinds = names.iter().map(|n| n.parse::<DefenseKind>()).collect::<Result<Vec<_>, _>>()?;
    let ds = closed_part(&read(&a.dataset)?)?;
    let bench = ClosedWorldBench::prepare(&ds, &cfg)?;

    let mut acc = Vec::new();
    let mut oh = Vec::new();
    let mut de = Vec::new();
    for kind in kinds {
        let s = bench.sweep(kind)?;
        for (res, tag) in [(&s.df, "df"), (&s.faa, "faa")] {
            acc.extend(res.points.iter().map(|p| PlotRow { x: p.p_t, y: p.accuracy, tag: format!("{}/{tag}", s.defense) }));
        }
        oh.extend(s.overheads.iter().map(|&(x, y)| PlotRow { x, y, tag: s.defense.clone() }));
        println!("{:<12} DE(df) {:>8.4}  DE(faa) {:>8.4}  drop {:>7.4}", s.defense, s.de_df, s.de_faa, s.drop);
        de.push(s);
    }
    de.sort_by(|x, y| x.defense.cmp(&y.defense));

    write_csv_dataset(&bench.train, ctx.out(&a.output.join("train.csv"))?)?;
    write_csv_dataset(&bench.test, ctx.out(&a.output.join("test.csv"))?)?;
    let (_, mut w) = ctx.create(&a.output.join("accuracy.csv"))?;
    write_plot_csv(&acc, &mut w)?;
    w.flush()?;
    let (_, mut w) = ctx.create(&a.output.join("overhead.csv"))?;
    write_plot_csv(&oh, &mut w)?;
    w.flush()?;
    let (_, mut w) = ctx.create(&a.output.join("de.csv"))?;
    writeln!(w, "{DE_HEADER}")?;
    writeln!(w, "defense,de_df,de_faa,drop")?;
    for s in &de {
        writeln!(w, "{},{:.6},{:.6},{:.6}", s.defense, s.de_df, s.de_faa, s.drop)?;
    }
    w.flush()?;
    Ok(())
}

fn roc_cmd(ctx: &Ctx, a: RocArgs) -> Result<()> {
    if a.thresholds < 2 {
        return Err(invalid("need at least 2 thresholds"));
    }
    let cfg = experiment_config(ctx, &a.exp, &a.model, None, a.seed)?;
    let kind: DefenseKind = a.defense.parse()?;
    let ds = read(&a.dataset)?;
    if ds.world() != World::Open {
        return Err(invalid("roc needs an open-world dataset with unmonitored traces"));
    }
    let bench = OpenWorldBench::prepare(&ds, &cfg)?;
    let (scores, labels) = bench.scores(kind, a.p_t, a.faa)?;
    let curve = roc(&scores, &labels, &threshold_grid(a.thresholds))?;
    let tag = format!("{}@{}/{}", kind.name(), a.p_t, if a.faa { "faa" } else { "df" });
    let rows: Vec<PlotRow> = curve.points.iter().map(|p| PlotRow { x: p.fpr, y: p.tpr, tag: tag.clone() }).collect();
    let (_, mut w) = ctx.create(&a.output)?;
    write_plot_csv(&rows, &mut w)?;
    w.flush()?;
    println!("{tag}: AUC {:.4} over {} points", curve.auc, curve.points.len());
    Ok(())
}
