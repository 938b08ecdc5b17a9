//! CPLEX LP text export of a built instance.

use std::fmt::Write as _;

use crate::formulation::MilpInstance;
use crate::lp::Sense;

const TERMS_PER_LINE: usize = 6;

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Column names: `x_<site>_<workload>` for binaries, `w_<workload>_<source>_<n>` for path weights.
pub fn column_names(instance: &MilpInstance) -> Vec<String> {
    let mut names = Vec::with_capacity(instance.num_columns());
    for b in &instance.binaries {
        names.push(format!(
            "x_{}_{}",
            sanitize(&instance.site_ids[b.site].0),
            sanitize(&instance.workload_ids[b.workload].0)
        ));
    }
    let mut last = None;
    let mut n = 0;
    for p in &instance.paths {
        if last != Some((p.workload, p.source)) {
            last = Some((p.workload, p.source));
            n = 0;
        }
        names.push(format!(
            "w_{}_{}_{n}",
            sanitize(&instance.workload_ids[p.workload].0),
            sanitize(&instance.site_ids[p.source].0)
        ));
        n += 1;
    }
    names
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(names.first().map_or("x", String::as_str));
        return;
    }
    for (t, &(j, a)) in terms.iter().enumerate() {
        if t > 0 && t % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        if t == 0 && sign == '+' {
            let _ = write!(out, " {:?} {}", a.abs(), names[j]);
        } else {
            let _ = write!(out, " {sign} {:?} {}", a.abs(), names[j]);
        }
    }
}

/// Objective, labeled rows, bounds and the binary section.
pub fn write_lp(instance: &MilpInstance) -> String {
    let names = column_names(instance);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "\\ {} sites, {} workloads, {} binaries, {} path weights",
        instance.num_sites(),
        instance.num_workloads(),
        instance.binaries.len(),
        instance.paths.len()
    );
    out.push_str("Minimize\n obj:");
    let obj: Vec<(usize, f64)> = instance
        .objective
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, c))
        .collect();
    write_terms(&mut out, &obj, &names);
    out.push_str("\nSubject To\n");
    let mut used = std::collections::BTreeMap::<String, usize>::new();
    for row in &instance.rows {
        let base = sanitize(&instance.label(&row.group));
        let count = used.entry(base.clone()).or_default();
        let label = if *count == 0 { base } else { format!("{base}_{count}") };
        *count += 1;
        let _ = write!(out, " {label}:");
        write_terms(&mut out, &row.coeffs, &names);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {:?}", row.rhs);
    }
    out.push_str("Bounds\n");
    for name in &names[instance.binaries.len()..] {
        let _ = writeln!(out, " {name} >= 0");
    }
    if !instance.binaries.is_empty() {
        out.push_str("Binary\n");
        for chunk in names[..instance.binaries.len()].chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}
