//! `bench`: time the attention scopes over a length grid and emit one CSV
//! record per (kind, length, repeat), plus per-kind scaling fits.
//!
//! MAC counts are exact and must match the closed-form predictions; wall
//! times are qualitative and summarized by least-squares fits (linear for
//! the chunk scopes, quadratic for global and time-restricted).

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use chunkwise_core::attention::{mhsa, mhsa_global, predict_macs, AttnScope, MhsaParams};
use chunkwise_core::encoder::EncoderConfig;
use chunkwise_core::fit::{median, polyfit};
use chunkwise_core::layout::{ChunkLayout, SamplingPlan};
use chunkwise_core::masks::AttnMask;
use chunkwise_core::{Element, Tensor};
use clap::{Args, ValueEnum};

use crate::config_flags::ConfigFlags;
use crate::Failure;

pub const CSV_HEADER: &str = "kind,L,W,C,h,repeat,wall_time_s,measured_macs,predicted_macs";

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum KindArg {
    Global,
    Chunk,
    Ssc,
    TimeRestricted,
}

impl From<KindArg> for AttnScope {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Global => AttnScope::Global,
            KindArg::Chunk => AttnScope::Chunk,
            KindArg::Ssc => AttnScope::Ssc,
            KindArg::TimeRestricted => AttnScope::TimeRestricted,
        }
    }
}

impl std::fmt::Display for KindArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(AttnScope::from(*self).name())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Attention scopes to benchmark.
    #[arg(long, value_delimiter = ',', default_values_t = vec![
        KindArg::Chunk, KindArg::Ssc, KindArg::Global, KindArg::TimeRestricted,
    ])]
    pub kinds: Vec<KindArg>,

    /// Sequence lengths; every length must be a multiple of the chunk size.
    #[arg(long, value_delimiter = ',', default_values_t = vec![
        64usize, 128, 192, 256, 320, 384, 448, 512,
    ])]
    pub lengths: Vec<usize>,

    /// Timed repetitions per (kind, length) cell; summaries use medians.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,

    /// Write CSV records here; summaries then go to stdout. Without it the
    /// records go to stdout and summaries to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Run benchmark cells on worker threads (never parallel within a cell).
    /// Timings become noisier; MAC counts are unaffected.
    #[arg(long)]
    pub parallel: bool,

    /// Element type of the benchmarked tensors.
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,

    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Clone, Debug)]
struct Record {
    kind: AttnScope,
    len: usize,
    chunk_size: usize,
    d_model: usize,
    n_heads: usize,
    repeat: usize,
    wall_time_s: f64,
    measured_macs: u64,
    predicted_macs: u64,
}

impl Record {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.9},{},{}",
            self.kind.name(),
            self.len,
            self.chunk_size,
            self.d_model,
            self.n_heads,
            self.repeat,
            self.wall_time_s,
            self.measured_macs,
            self.predicted_macs
        )
    }
}

fn bench_cell<T: Element>(
    kind: AttnScope,
    len: usize,
    chunk_size: usize,
    params: &MhsaParams<T>,
    seed: u64,
    repeats: usize,
) -> Result<Vec<Record>, Failure> {
    let d_model = params.d_model();
    let x = Tensor::<T>::seeded(&[len, d_model], seed ^ (len as u64), 1.0);
    let mask = match kind {
        AttnScope::Global => None,
        _ => {
            let layout = ChunkLayout::new(len, chunk_size)?;
            Some(match kind {
                AttnScope::Chunk => AttnMask::chunk(&layout, len),
                AttnScope::Ssc => {
                    let plan = SamplingPlan::new(&layout);
                    AttnMask::ssc(&layout, &plan, len)
                }
                AttnScope::TimeRestricted => AttnMask::time_restricted(&layout, len),
                AttnScope::Global => unreachable!(),
            })
        }
    };
    let predicted = predict_macs(kind, len, chunk_size, d_model)?.total();
    let mut records = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let start = Instant::now();
        let measured = match &mask {
            None => mhsa_global(&x, params)?.1,
            Some(m) => mhsa(&x, params, m)?.1,
        };
        let wall_time_s = start.elapsed().as_secs_f64();
        records.push(Record {
            kind,
            len,
            chunk_size,
            d_model,
            n_heads: params.n_heads(),
            repeat,
            wall_time_s,
            measured_macs: measured.total(),
            predicted_macs: predicted,
        });
    }
    Ok(records)
}

fn run_typed<T: Element>(
    kinds: &[AttnScope],
    lengths: &[usize],
    config: &EncoderConfig,
    repeats: usize,
    parallel: bool,
) -> Result<Vec<Record>, Failure> {
    let (chunk_size, seed) = (config.chunk_size, config.seed);
    let params = MhsaParams::<T>::seeded(config.d_model, config.n_heads, seed)?;
    let cells: Vec<(AttnScope, usize)> = kinds
        .iter()
        .flat_map(|&k| lengths.iter().map(move |&l| (k, l)))
        .collect();
    if !parallel {
        let mut records = Vec::new();
        for &(kind, len) in &cells {
            records.extend(bench_cell(kind, len, chunk_size, &params, seed, repeats)?);
        }
        return Ok(records);
    }
    let mut slots: Vec<Option<Result<Vec<Record>, Failure>>> = Vec::new();
    slots.resize_with(cells.len(), || None);
    std::thread::scope(|scope| {
        for (slot, &(kind, len)) in slots.iter_mut().zip(&cells) {
            let params = &params;
            scope.spawn(move || {
                *slot = Some(bench_cell(kind, len, chunk_size, params, seed, repeats));
            });
        }
    });
    let mut records = Vec::new();
    for slot in slots {
        records.extend(slot.expect("every cell ran")?);
    }
    Ok(records)
}

fn summarize(records: &[Record], kind: AttnScope, lengths: &[usize]) -> Option<String> {
    let mut mac_medians = Vec::new();
    let mut time_medians = Vec::new();
    let mut xs = Vec::new();
    for &len in lengths {
        let cell: Vec<&Record> = records
            .iter()
            .filter(|r| r.kind == kind && r.len == len)
            .collect();
        if cell.is_empty() {
            continue;
        }
        xs.push(len as f64);
        mac_medians.push(median(
            &cell.iter().map(|r| r.measured_macs as f64).collect::<Vec<_>>(),
        ));
        time_medians.push(median(
            &cell.iter().map(|r| r.wall_time_s).collect::<Vec<_>>(),
        ));
    }
    let (label, degree, coeff_idx) = match kind {
        AttnScope::Chunk | AttnScope::Ssc => ("linear", 1usize, 1usize),
        AttnScope::Global | AttnScope::TimeRestricted => ("quadratic", 2, 2),
    };
    let mac_fit = polyfit(&xs, &mac_medians, degree)?;
    let time_fit = polyfit(&xs, &time_medians, degree)?;
    Some(format!(
        "# summary kind={} fit={label} macs_coeff={:.6e} macs_r2={:.6} time_coeff={:.6e} time_r2={:.6}",
        kind.name(),
        mac_fit.coeffs[coeff_idx],
        mac_fit.r_squared,
        time_fit.coeffs[coeff_idx],
        time_fit.r_squared
    ))
}

pub fn run(args: BenchArgs) -> Result<(), Failure> {
    let config = args.config.resolve()?;
    if args.kinds.is_empty() || args.lengths.is_empty() {
        return Err(Failure::Usage("need at least one kind and one length".into()));
    }
    if args.repeats == 0 {
        return Err(Failure::Usage("repeats must be at least 1".into()));
    }
    for &len in &args.lengths {
        if len == 0 || len % config.chunk_size != 0 {
            return Err(Failure::Usage(format!(
                "length {len} is not a positive multiple of chunk size {}",
                config.chunk_size
            )));
        }
    }
    let kinds: Vec<AttnScope> = args.kinds.iter().map(|&k| k.into()).collect();
    let records = match args.precision {
        Precision::F64 => {
            run_typed::<f64>(&kinds, &args.lengths, &config, args.repeats, args.parallel)?
        }
        Precision::F32 => {
            run_typed::<f32>(&kinds, &args.lengths, &config, args.repeats, args.parallel)?
        }
    };

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for record in &records {
        csv.push_str(&record.csv_row());
        csv.push('\n');
    }
    let summaries: Vec<String> = kinds
        .iter()
        .filter_map(|&k| summarize(&records, k, &args.lengths))
        .collect();

    match &args.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            let mut stdout = std::io::stdout().lock();
            for line in &summaries {
                writeln!(stdout, "{line}").map_err(Failure::from)?;
            }
        }
        None => {
            print!("{csv}");
            let mut stderr = std::io::stderr().lock();
            for line in &summaries {
                writeln!(stderr, "{line}").map_err(Failure::from)?;
            }
        }
    }

    for record in &records {
        if record.measured_macs != record.predicted_macs {
            return Err(Failure::Violation(format!(
                "measured MACs {} differ from predicted {} for kind={} L={}",
                record.measured_macs,
                record.predicted_macs,
                record.kind.name(),
                record.len
            )));
        }
    }
    Ok(())
}
