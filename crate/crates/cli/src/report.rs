//! Plain-text and CSV report rendering with fixed formatting, so equal
//! reports serialize to equal bytes.

use fusemot_core::metrics::{FeatureStats, MetricsReport};

fn ratio(v: f64) -> String {
    format!("{v:.6}")
}

fn rows_of(report: &MetricsReport) -> Vec<(&'static str, String)> {
    vec![
        ("MOTA", ratio(report.clear.mota)),
        ("IDF1", ratio(report.id.idf1)),
        ("IDs", report.clear.id_switches.to_string()),
        ("Frag", report.clear.fragmentations.to_string()),
        ("FP", report.clear.false_positives.to_string()),
        ("FN", report.clear.false_negatives.to_string()),
        ("IDTP", report.id.idtp.to_string()),
        ("IDFP", report.id.idfp.to_string()),
        ("IDFN", report.id.idfn.to_string()),
        ("GT", report.clear.gt_total.to_string()),
        ("Hyp", report.hyp_total.to_string()),
    ]
}

pub fn metrics_table(report: &MetricsReport) -> String {
    let rows = rows_of(report);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        s.push_str(&format!("{k:<width$}  {v}\n"));
    }
    s
}

pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut s = String::from("metric,value\n");
    for (k, v) in rows_of(report) {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(v) => ratio(v),
        None => "undefined".to_string(),
    }
}

fn stats_rows(s: &FeatureStats) -> Vec<(&'static str, String)> {
    vec![
        ("entropy_bits", ratio(s.entropy_bits)),
        ("kurtosis", opt(s.kurtosis)),
        ("noise_mean", opt(s.noise_mean)),
        ("mean_intensity", ratio(s.mean_intensity)),
        ("std_dev", ratio(s.std_dev)),
    ]
}

pub fn stats_table(baseline: &FeatureStats, enhanced: &FeatureStats) -> String {
    let b = stats_rows(baseline);
    let e = stats_rows(enhanced);
    let name_w = b.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let base_w = b
        .iter()
        .map(|(_, v)| v.len())
        .max()
        .unwrap_or(0)
        .max("baseline".len());
    let mut s = format!("{:<name_w$}  {:>base_w$}  enhanced\n", "metric", "baseline");
    for ((k, bv), (_, ev)) in b.iter().zip(&e) {
        s.push_str(&format!("{k:<name_w$}  {bv:>base_w$}  {ev}\n"));
    }
    s
}

pub fn stats_csv(baseline: &FeatureStats, enhanced: &FeatureStats) -> String {
    let mut s = String::from("metric,baseline,enhanced\n");
    for ((k, bv), (_, ev)) in stats_rows(baseline).iter().zip(&stats_rows(enhanced)) {
        s.push_str(&format!("{k},{bv},{ev}\n"));
    }
    s
}
