use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use trapeval::dataset::{split_cis_trans, AnnotationSet, DayBasis, ReferenceComparison, SplitConfig};

use super::{ensure_dir, write_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DayBasisArg {
    Month,
    Year,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// COCO-style annotation JSON with `location` and `date` on images
    pub annotations: PathBuf,
    /// Trans-test location ids, comma separated (default: 9 chosen by seed)
    #[arg(long, value_delimiter = ',', requires = "trans_val")]
    pub trans_test: Vec<u32>,
    /// Trans-val location id
    #[arg(long, requires = "trans_test")]
    pub trans_val: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub cis_val_fraction: f64,
    /// Calendar basis of the odd/even day rule
    #[arg(long, value_enum, default_value = "month")]
    pub day_basis: DayBasisArg,
    /// Split images without boxes too
    #[arg(long)]
    pub keep_empty: bool,
    /// Compare counts with the published camera-trap split sizes
    #[arg(long)]
    pub reference: bool,
    #[arg(long, default_value = "split_out")]
    pub out_dir: PathBuf,
}

pub fn run(args: &SplitArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let set = AnnotationSet::read(&args.annotations)
        .with_context(|| format!("reading annotations {}", args.annotations.display()))?;
    let set = if args.keep_empty { set } else { set.filter_empty() };
    let mut cfg = match args.trans_val {
        Some(v) => SplitConfig::new(args.trans_test.clone(), v, args.seed),
        None => SplitConfig::choose(&set.locations(), args.seed)?,
    };
    cfg.cis_val_fraction = args.cis_val_fraction;
    cfg.day_basis = match args.day_basis {
        DayBasisArg::Month => DayBasis::DayOfMonth,
        DayBasisArg::Year => DayBasis::DayOfYear,
    };
    let result = split_cis_trans(&set.images, &cfg)?;
    let violations = result.violations(&cfg);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        bail!("split broke {} invariant(s); nothing written", violations.len());
    }

    ensure_dir(&args.out_dir)?;
    for (name, records) in result.parts() {
        write_file(&args.out_dir, &format!("{name}.json"), set.with_images(records.to_vec()).to_json() + "\n")?;
    }
    let trans: Vec<String> = cfg.trans_test_locations.iter().map(u32::to_string).collect();
    let mut report = format!(
        "trans_test_locations,{}\ntrans_val_location,{}\nsplit,count\n",
        trans.join(" "),
        cfg.trans_val_location
    );
    for (name, records) in result.parts() {
        report.push_str(&format!("{name},{}\n", records.len()));
    }
    report.push_str(&format!("total,{}\n", result.total()));
    write_file(&args.out_dir, "split_report.csv", &report)?;
    out.write_all(report.as_bytes())?;
    if args.reference {
        let cmp = ReferenceComparison::new(&result);
        let text = cmp.to_string();
        write_file(&args.out_dir, "reference_comparison.csv", &text)?;
        out.write_all(text.as_bytes())?;
        if !cmp.matches() {
            eprintln!("split counts differ from the reference sizes; see the per-location table");
        }
    }
    Ok(())
}
