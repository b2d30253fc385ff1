//! CSV files: populations, stratum summaries, reports, raw dumps, shrinkage
//! diagnostics and theory tables.
//!
//! Every file may start with `# key=value` comment lines. Numbers are written
//! in shortest round-trip form; absent values are empty fields.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::montecarlo::{ShrinkageRow, SimulationReport};
use crate::population::FinitePopulation;
use crate::theory::TheoryReport;

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        kind => Error::Parse {
            row: 0,
            message: format!("{kind:?}"),
        },
    }
}

fn write_comments<W: Write>(w: &mut W, lines: &[String]) -> Result<()> {
    for line in lines {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn flag(v: Option<bool>) -> String {
    v.map(|b| u8::from(b).to_string()).unwrap_or_default()
}

/// `stratum,group,y[,x]`, one unit per row, stratum-major, 1-based indices.
pub fn write_population<W: Write>(mut w: W, pop: &FinitePopulation, comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    let aux = pop.auxiliary();
    let mut out = csv_writer(w);
    let mut header = vec!["stratum", "group", "y"];
    if aux.is_some() {
        header.push("x");
    }
    out.write_record(&header).map_err(csv_error)?;
    for (h, values) in pop.strata().iter().enumerate() {
        let g = pop.group_of()[h] + 1;
        for (j, y) in values.iter().enumerate() {
            let mut rec = vec![(h + 1).to_string(), g.to_string(), num(*y)];
            if let Some(x) = aux {
                rec.push(num(x[h][j]));
            }
            out.write_record(&rec).map_err(csv_error)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Population file contents: the population and its `# key=value` comments.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationFile {
    pub population: FinitePopulation,
    /// `# key=value` lines in file order.
    pub comments: Vec<(String, String)>,
}

/// Parse a population file. Strata must be numbered `1..=S` and groups
/// `1..=H`; each stratum keeps its row order.
pub fn read_population<R: Read>(mut r: R) -> Result<PopulationFile> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut comments = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
            comments.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(cs), Some(cg), Some(cy)) = (col("stratum"), col("group"), col("y")) else {
        return Err(Error::Parse {
            row: 1,
            message: format!(
                "header must contain stratum,group,y; got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    };
    let cx = col("x");
    let mut strata: Vec<Vec<f64>> = Vec::new();
    let mut aux: Vec<Vec<f64>> = Vec::new();
    let mut group_of: Vec<Option<usize>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            Error::Parse {
                row,
                message: e.to_string(),
            }
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, what: &str| {
            rec.get(i).map(str::trim).ok_or_else(|| Error::Parse {
                row,
                message: format!("missing {what}"),
            })
        };
        let index = |i: usize, what: &str| -> Result<usize> {
            let s = field(i, what)?;
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::Parse {
                    row,
                    message: format!("{what} `{s}` is not a positive integer"),
                }),
            }
        };
        let value = |i: usize, what: &str| -> Result<f64> {
            let s = field(i, what)?;
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    message: format!("{what} `{s}` is not a finite number"),
                }),
            }
        };
        let h = index(cs, "stratum")?;
        let g = index(cg, "group")?;
        let y = value(cy, "y")?;
        if h >= strata.len() {
            strata.resize_with(h + 1, Vec::new);
            aux.resize_with(h + 1, Vec::new);
            group_of.resize(h + 1, None);
        }
        match group_of[h] {
            None => group_of[h] = Some(g),
            Some(prev) if prev != g => {
                return Err(Error::Parse {
                    row,
                    message: format!("stratum {} assigned to groups {} and {}", h + 1, prev + 1, g + 1),
                })
            }
            Some(_) => {}
        }
        strata[h].push(y);
        if let Some(cx) = cx {
            aux[h].push(value(cx, "x")?);
        }
    }
    if strata.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "population file has no units".into(),
        });
    }
    let group_of = group_of
        .into_iter()
        .enumerate()
        .map(|(h, g)| g.ok_or_else(|| Error::shape(format!("stratum {} has no units", h + 1))))
        .collect::<Result<Vec<_>>>()?;
    let mut population = FinitePopulation::new(strata, group_of)?;
    if cx.is_some() {
        population = population.with_auxiliary(aux)?;
    }
    Ok(PopulationFile { population, comments })
}

/// `stratum,group,size,mean,variance,mu3,mu4`.
pub fn write_summary<W: Write>(w: W, pop: &FinitePopulation) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["stratum", "group", "size", "mean", "variance", "mu3", "mu4"])
        .map_err(csv_error)?;
    for (h, s) in pop.summaries()?.iter().enumerate() {
        out.write_record([
            (h + 1).to_string(),
            (pop.group_of()[h] + 1).to_string(),
            s.size.to_string(),
            num(s.mean),
            num(s.variance),
            num(s.mu3),
            num(s.mu4),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// `study,estimator,e,metric,value,mc_se` for every report in order.
pub fn write_report<W: Write>(mut w: W, reports: &[SimulationReport], comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    let mut out = csv_writer(w);
    out.write_record(["study", "estimator", "e", "metric", "value", "mc_se"])
        .map_err(csv_error)?;
    for report in reports {
        for r in &report.rows {
            out.write_record([
                r.study.clone(),
                r.estimator.clone(),
                opt(r.e),
                r.metric.label().to_string(),
                num(r.value),
                opt(r.mc_se),
            ])
            .map_err(csv_error)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `replication,estimator,e,estimate,covered,ci_len`, with a `# study=`
/// comment before each study's block.
pub fn write_raw<W: Write>(mut w: W, reports: &[SimulationReport], comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "replication,estimator,e,estimate,covered,ci_len")?;
    for report in reports {
        writeln!(w, "# study={}", report.study)?;
        let mut out = csv_writer(&mut w);
        for r in &report.raw {
            out.write_record([
                r.replication.to_string(),
                r.estimator.label().to_string(),
                opt(r.e),
                num(r.estimate),
                flag(r.covered),
                opt(r.ci_len),
            ])
            .map_err(csv_error)?;
        }
        out.flush()?;
    }
    Ok(())
}

/// `replication,g,s2,delta_eb,delta_ceb,fallback`, with a `# study=`
/// comment before each study's block.
pub fn write_shrinkage<W: Write>(mut w: W, studies: &[(String, Vec<ShrinkageRow>)], comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "replication,g,s2,delta_eb,delta_ceb,fallback")?;
    for (study, rows) in studies {
        writeln!(w, "# study={study}")?;
        let mut out = csv_writer(&mut w);
        for r in rows {
            out.write_record([
                r.replication.to_string(),
                r.g.to_string(),
                num(r.s2),
                num(r.delta_eb),
                num(r.delta_ceb),
                flag(Some(r.fallback)),
            ])
            .map_err(csv_error)?;
        }
        out.flush()?;
    }
    Ok(())
}

/// One row per (design, convention) with the design effects repeated.
pub fn write_theory<W: Write>(mut w: W, report: &TheoryReport, comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    let mut out = csv_writer(w);
    out.write_record([
        "design",
        "convention",
        "v",
        "v_fpc",
        "bias",
        "var_v",
        "mse",
        "mse_printed",
        "deff",
        "deff_paper",
        "oracle_expectation",
        "oracle_variance",
        "oracle_bias",
    ])
    .map_err(csv_error)?;
    for r in &report.rows {
        out.write_record([
            r.design.label().to_string(),
            r.convention.label().to_string(),
            num(r.v),
            num(r.v_fpc),
            num(r.bias),
            num(r.var_v),
            num(r.mse),
            opt(r.mse_printed),
            num(report.deff),
            num(report.deff_paper),
            opt(r.oracle.map(|o| o.expectation)),
            opt(r.oracle.map(|o| o.variance)),
            opt(r.oracle.map(|o| o.bias)),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::PopulationSpec;

    #[test]
    fn population_round_trip_is_exact() {
        let pop = PopulationSpec::bivariate_gamma(400, 4, 5).generate().unwrap();
        let mut buf = Vec::new();
        write_population(&mut buf, &pop, &["seed=5".into()]).unwrap();
        let back = read_population(buf.as_slice()).unwrap();
        assert_eq!(back.population, pop);
        assert_eq!(back.comments, vec![("seed".to_string(), "5".to_string())]);
    }

    #[test]
    fn population_file_layout() {
        let pop = FinitePopulation::with_adjacent_pairs(vec![vec![1.5, 2.0], vec![3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        write_population(&mut buf, &pop, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "stratum,group,y\n1,1,1.5\n1,1,2\n2,1,3\n2,1,4\n");
    }

    #[test]
    fn parse_errors_carry_row_numbers() {
        let src = "# seed=1\nstratum,group,y\n1,1,2.0\n1,1,abc\n";
        match read_population(src.as_bytes()) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 4, "{message}");
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
        let src = "stratum,group\n1,1\n";
        assert!(matches!(
            read_population(src.as_bytes()),
            Err(Error::Parse { row: 1, .. })
        ));
        let src = "stratum,group,y\n0,1,2\n";
        assert!(matches!(
            read_population(src.as_bytes()),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn unpaired_groups_are_rejected() {
        let src = "stratum,group,y\n1,1,1\n1,1,2\n2,2,1\n2,2,3\n";
        assert!(matches!(read_population(src.as_bytes()), Err(Error::Shape(_))));
    }

    #[test]
    fn summary_sidecar() {
        let pop = FinitePopulation::with_adjacent_pairs(vec![vec![0.0, 2.0], vec![1.0, 2.0, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_summary(&mut buf, &pop).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "stratum,group,size,mean,variance,mu3,mu4\n1,1,2,1,2,0,2\n2,1,3,2,1,0,1\n"
        );
    }
}
