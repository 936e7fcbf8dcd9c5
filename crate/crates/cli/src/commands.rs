use std::path::{Path, PathBuf};

use serde::Serialize;

use privscore::analytics::{
    pfi as permutation_importance, regress_ps, subgroup_summary, SubgroupSummary,
};
use privscore::dag::{validate, CausalDag};
use privscore::dataset::{
    apply_recipe_counted, load_column_specs, split, ColumnSpec, DatasetTable, RawTable, Recipe,
};
use privscore::privilege::{predictor_names, WorldModels};
use privscore::psc::{bootstrap_psc, psc};
use privscore::report::{read_records, render_svg, write_records, PsRecord};
use privscore::study::run_simulation;
use privscore::warp::warped_export;
use privscore::{Error, Result};

use crate::config::RunConfig;

const DEFAULT_AUDIT_DIR: &str = "privscore-audit";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

fn to_json(v: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn simulate(c: &RunConfig) -> Result<()> {
    c.validate()?;
    let report = run_simulation(&c.simulation())?;
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(out) = &c.out {
        ensure_dir(out)?;
        write_file(&out.join("metrics.csv"), &csv)?;
        write_file(&out.join("metrics.json"), report.to_json()? + "\n")?;
        write_file(&out.join("config.json"), to_json(c)?)?;
    }
    Ok(())
}

pub struct AuditInput {
    pub data: PathBuf,
    pub dag: PathBuf,
    pub columns: Option<PathBuf>,
    pub recipe: Option<Recipe>,
    pub svg: bool,
}

fn columns_document(specs: &[ColumnSpec]) -> serde_json::Value {
    let map = specs
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                serde_json::json!({ "kind": s.kind, "role": s.role }),
            )
        })
        .collect::<serde_json::Map<_, _>>();
    serde_json::Value::Object(map)
}

fn load_table(input: &AuditInput) -> Result<DatasetTable> {
    match (&input.columns, input.recipe) {
        (Some(path), _) => {
            let specs = load_column_specs(path)?;
            DatasetTable::load_csv(&input.data, &specs)
        }
        (None, Some(recipe)) => {
            let raw = RawTable::from_path(&input.data)?;
            let (table, dropped) = apply_recipe_counted(&raw, recipe)?;
            if dropped > 0 {
                log::warn!(
                    "{dropped} rows dropped while encoding {}",
                    input.data.display()
                );
            }
            Ok(table)
        }
        (None, None) => Err(Error::InvalidArgument(
            "either --columns or --recipe is required".into(),
        )),
    }
}

#[derive(Serialize)]
struct Subgroups {
    all: SubgroupSummary,
    disadvantaged: Option<SubgroupSummary>,
    advantaged: Option<SubgroupSummary>,
}

pub fn audit(c: &RunConfig, input: &AuditInput) -> Result<()> {
    c.validate()?;
    let dag = CausalDag::load(&input.dag)?;
    let table = load_table(input)?;
    let vdag = validate(&dag, &table)?;
    let (split_seed, tune_seed, boot_seed) = c.audit_seeds();
    let parts = split(&table, c.split, split_seed)?;
    let train = table.select_rows(&parts.train);
    let test = table.select_rows(&parts.test);

    let worlds = privscore::privilege::build_worlds(&train, &vdag, &c.pipeline(tune_seed))?;
    let rows: Vec<Vec<f64>> = test.rows().collect();
    let opts = c.options();
    let results = rows
        .iter()
        .map(|r| psc(&worlds, r, opts))
        .collect::<Result<Vec<_>>>()?;
    let intervals = bootstrap_psc(
        &train,
        &vdag,
        &rows,
        &worlds,
        &c.bootstrap_config(boot_seed),
        opts,
    )?;

    let mut arrows: Vec<(usize, String)> = worlds
        .warper
        .feature_models()
        .iter()
        .map(|f| (f.arrow, f.feature.clone()))
        .collect();
    arrows.sort();
    arrows.dedup_by_key(|a| a.0);
    let arrow_names: Vec<String> = arrows.into_iter().map(|a| a.1).collect();
    let records: Vec<PsRecord> = parts
        .test
        .iter()
        .zip(&results)
        .zip(&intervals)
        .map(|((&i, r), ci)| PsRecord::new((i + 1).to_string(), r, Some(ci), arrow_names.clone()))
        .collect();

    let pa = test.pa_index();
    let level = vdag.advantaged_level();
    let qa = c.quantile_alpha();
    let group =
        |adv: bool| subgroup_summary(&results, |i, _| (rows[i][pa] == level) == adv, qa).ok();
    let subgroups = Subgroups {
        all: subgroup_summary(&results, |_, _| true, qa)?,
        disadvantaged: group(false),
        advantaged: group(true),
    };
    let ps: Vec<f64> = results.iter().map(|r| r.ps).collect();
    let regression = regress_ps(&test, &ps, &predictor_names(&test))?;
    let warped = worlds.warper.warp_table(&test, worlds.full_coalition())?;
    let export = warped_export(&test, &warped, &worlds.warper)?;

    let out = c
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_AUDIT_DIR));
    ensure_dir(&out)?;
    write_file(&out.join("config.json"), to_json(c)?)?;
    write_file(
        &out.join("columns.json"),
        to_json(&columns_document(table.columns()))?,
    )?;
    write_file(&out.join("dag.json"), to_json(&dag)?)?;
    worlds.save(out.join("worlds.json"))?;
    test.save_csv(out.join("test.csv"))?;
    export.save_csv(out.join("warped_test.csv"))?;
    let ps_path = out.join("ps.csv");
    let file = std::fs::File::create(&ps_path).map_err(io_err(&ps_path))?;
    write_records(&records, std::io::BufWriter::new(file))?;
    write_file(&out.join("subgroups.json"), to_json(&subgroups)?)?;
    write_file(&out.join("regression.txt"), regression.format_table())?;
    if input.svg {
        let dir = out.join("svg");
        ensure_dir(&dir)?;
        for r in &records {
            write_file(&dir.join(format!("{}.svg", r.id)), render_svg(r))?;
        }
    }

    println!(
        "scored {} test rows ({} train); outputs in {}",
        records.len(),
        train.n_rows(),
        out.display()
    );
    print!("{}", subgroups.all.to_csv());
    print!("{}", regression.format_table());
    Ok(())
}

fn load_records(run: &Path) -> Result<Vec<PsRecord>> {
    let path = run.join("ps.csv");
    let file = std::fs::File::open(&path).map_err(io_err(&path))?;
    read_records(std::io::BufReader::new(file))
}

pub fn explain(run: &Path, id: &str, svg: Option<&Path>) -> Result<()> {
    let records = load_records(run)?;
    let Some(record) = records.iter().find(|r| r.id == id) else {
        const SHOWN: usize = 20;
        let ids: Vec<&str> = records.iter().take(SHOWN).map(|r| r.id.as_str()).collect();
        let more = records.len().saturating_sub(SHOWN);
        let tail = if more > 0 {
            format!(" and {more} more")
        } else {
            String::new()
        };
        return Err(Error::InvalidArgument(format!(
            "no row with id `{id}` in {}; available ids: {}{tail}",
            run.display(),
            ids.join(", ")
        )));
    };
    let svg_path = svg.map_or_else(|| run.join(format!("explain_{id}.svg")), Path::to_path_buf);
    write_file(&svg_path, render_svg(record))?;
    print!("{}", to_json(record)?);
    Ok(())
}

pub fn pfi(run: &Path, repeats: usize, seed: u64) -> Result<()> {
    let worlds = WorldModels::from_json(&read_file(&run.join("worlds.json"))?)?;
    let specs = load_column_specs(run.join("columns.json"))?;
    let test = DatasetTable::load_csv(run.join("test.csv"), &specs)?;
    worlds.warper.check_schema(&test)?;
    let reference: Vec<f64> = test
        .rows()
        .map(|r| worlds.estimate_ps(&r).delta_hat)
        .collect();
    let mut csv = String::from("feature,importance\n");
    for name in worlds.real_model.feature_names() {
        let v = permutation_importance(&worlds, &test, &reference, name, repeats, seed)?;
        csv.push_str(&format!("{name},{v:.6}\n"));
    }
    write_file(&run.join("pfi.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
