use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use finmet_cli::config::parse_config;
use finmet_cli::table::Table;
use finmet_cli::touchstone::{write_touchstone, DataFormat, FreqUnit};
use finmet_core::resonator::{add_noise, lc_frequency, synthesize_trace, HangerParams};
use proptest::prelude::*;

const L: f64 = 2e-9;
const C0: f64 = 450e-15;
const DC: f64 = 18e-15;

fn finmet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finmet"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn truth(n: u32) -> HangerParams {
    let f = lc_frequency(L, C0 + n as f64 * DC).unwrap();
    HangerParams {
        a: 0.8,
        theta: 0.3,
        tau: 2e-9,
        ..HangerParams::new(f, 2e5 + 1e4 * n as f64, 8e4, 0.15)
    }
}

fn trace_file(dir: &Path, n: u32, format: DataFormat, seed: u64) -> PathBuf {
    let p = truth(n);
    let w = 12.0 * p.linewidth();
    let t = synthesize_trace(&p, p.f_r - w, p.f_r + w, 801).unwrap();
    let t = add_noise(&t, 1e-4, seed);
    write(
        dir,
        &format!("res{n}.s2p"),
        &write_touchstone(&t, FreqUnit::Ghz, format),
    )
}

fn config(dir: &Path) -> PathBuf {
    let body = format!(
        "[resonator]\ninductance_h = {L:e}\nbase_capacitance_f = {C0:e}\nbase_capacitance_source = \"simulated\"\n"
    );
    write(dir, "project.toml", &body)
}

fn csv(dir: &Path, name: &str) -> Table {
    Table::read(&dir.join(name)).unwrap()
}

#[test]
fn eight_traces_give_eight_rows_and_a_slope() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<String> = (0..8)
        .map(|n| {
            trace_file(dir.path(), n, DataFormat::Ri, n as u64)
                .display()
                .to_string()
        })
        .collect();
    let cfg = config(dir.path());
    let out = dir.path().join("out");
    let mut args = vec![
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "resfit",
    ];
    args.extend(files.iter().map(String::as_str));
    args.extend(["--fins", "0,1,2,3,4,5,6,7"]);
    let o = finmet(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let t = csv(&out, "resfit.csv");
    assert_eq!(t.rows.len(), 8);
    for (n, f) in t.floats("f_r_hz").unwrap().iter().enumerate() {
        assert!((f / truth(n as u32).f_r - 1.0).abs() < 1e-6);
    }
    let fit = csv(&out, "series_fit.csv");
    let slope = fit.floats("slope").unwrap()[0];
    assert!((slope / (DC / C0) - 1.0).abs() < 1e-3, "slope {slope}");
    let cfin = fit.floats("fin_capacitance_f").unwrap()[0];
    assert!((cfin / DC - 1.0).abs() < 1e-3);
    assert!(out.join("run.json").exists());
}

#[test]
fn db_and_ri_files_fit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let fits: Vec<Table> = [DataFormat::Ri, DataFormat::Db]
        .into_iter()
        .enumerate()
        .map(|(k, fmt)| {
            let sub = dir.path().join(k.to_string());
            std::fs::create_dir(&sub).unwrap();
            let f = trace_file(&sub, 3, fmt, 11);
            let o = finmet(&["--out", sub.to_str().unwrap(), "resfit", f.to_str().unwrap()]);
            assert!(o.status.success());
            csv(&sub, "resfit.csv")
        })
        .collect();
    for col in ["f_r_hz", "q_i", "q_c", "phi_rad", "a", "theta_rad", "tau_s"] {
        let a = fits[0].floats(col).unwrap()[0];
        let b = fits[1].floats(col).unwrap()[0];
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-3), "{col}: {a} vs {b}");
    }
}

#[test]
fn resfit_without_files_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = finmet(&["--out", dir.path().to_str().unwrap(), "resfit"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_trace_does_not_stop_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let good = trace_file(dir.path(), 1, DataFormat::Ma, 3);
    let bad = write(dir.path(), "broken.s2p", "# GHZ S RI R 50\n1 2 three\n");
    let out = dir.path().join("out");
    let o = finmet(&[
        "--out",
        out.to_str().unwrap(),
        "resfit",
        bad.to_str().unwrap(),
        good.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.s2p"));
    assert_eq!(csv(&out, "resfit.csv").rows.len(), 1);
}

#[test]
fn missing_fin_block_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[solver]\ntol = 1e-10\n");
    let o = finmet(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "capacitance",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`fin`"));
}

#[test]
fn out_of_regime_design_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    // small, thin AlOx junction: large E_C, E_J/E_C well below 20
    let cfg = write(
        dir.path(),
        "c.toml",
        "[junction]\nbarrier_thickness_m = 2e-9\nbarrier_height_ev = 2.0\narea_m2 = 1e-14\nrel_permittivity = 9.0\nnormal_resistance_ohm = 2e4\n",
    );
    let o = finmet(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "design",
    ]);
    assert_ne!(o.status.code(), Some(0));
    let t = csv(dir.path(), "design.csv");
    assert_eq!(t.rows[0][t.column("regime").unwrap()], "out_of_regime");
}

fn design_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "design.toml",
        r#"
[junction]
barrier_thickness_m = 8e-9
barrier_height_ev = 0.2
area_m2 = 1e-10
rel_permittivity = 11.7
normal_resistance_ohm = 668.0

[monte_carlo]
samples = 2000
seed = 42
sigma_d_m = 0.04e-9

[etch]
mask_width_m = 300e-9
undercut_per_side_m = 40.5e-9
target_thickness_m = 100e-9
"#,
    )
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = design_config(dir.path());
    let run = |sub: &str, extra: &[&str]| {
        let out = dir.path().join(sub);
        for cmd in ["design", "etchplan"] {
            let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
            args.extend(extra);
            args.push(cmd);
            assert!(finmet(&args).status.success());
        }
        out
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--sequential"]);
    for name in [
        "design.csv",
        "spread.csv",
        "design_summary.csv",
        "etch.csv",
        "recipe.txt",
    ] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
        assert_eq!(x, std::fs::read(c.join(name)).unwrap(), "{name}");
    }
    let d = run("d", &["--seed", "43"]);
    assert_ne!(
        std::fs::read(a.join("spread.csv")).unwrap(),
        std::fs::read(d.join("spread.csv")).unwrap()
    );
}

#[test]
fn series_csv_reingests_without_drift() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("n_fins,frequency_hz\n");
    for n in [0u32, 1, 2, 4, 8] {
        body.push_str(&format!("{n},{:e}\n", lc_frequency(L, C0 + n as f64 * DC).unwrap()));
    }
    let input = write(dir.path(), "freqs.csv", &body);
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert!(
        finmet(&["--out", first.to_str().unwrap(), "series", input.to_str().unwrap()])
            .status
            .success()
    );
    let again = first.join("series.csv");
    assert!(
        finmet(&["--out", second.to_str().unwrap(), "series", again.to_str().unwrap()])
            .status
            .success()
    );
    for name in ["series.csv", "series_fit.csv"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn output_dir_resolution_prefers_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "output_dir = \"from_config\"\n[etch]\ninitial_thickness_m = 20e-9\ntarget_thickness_m = 10e-9\n",
    );
    let flag = dir.path().join("from_flag");
    assert!(finmet(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        flag.to_str().unwrap(),
        "etchplan"
    ])
    .status
    .success());
    assert!(flag.join("etch.csv").exists());
    assert!(finmet(&["--config", cfg.to_str().unwrap(), "etchplan"])
        .status
        .success());
    assert!(dir.path().join("from_config/etch.csv").exists());
}

const BASE: &str = r#"[junction]
barrier_thickness_m = 8e-9
barrier_height_ev = 0.2
area_m2 = 1e-10
rel_permittivity = 11.7
normal_resistance_ohm = 668.0

[monte_carlo]
samples = 2000
"#;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strict_mode_rejects_any_misspelt_key(line in 0usize..8, pos in 0usize..64, ch in "[a-z_]") {
        let lines: Vec<&str> = BASE.lines().collect();
        let key_lines: Vec<usize> = lines.iter().enumerate().filter(|(_, l)| l.contains(" = ")).map(|(k, _)| k).collect();
        let k = key_lines[line % key_lines.len()];
        let (key, rest) = lines[k].split_once(" = ").unwrap();
        let mut key: Vec<char> = key.chars().collect();
        let at = pos % (key.len() + 1);
        key.insert(at, ch.chars().next().unwrap());
        let key: String = key.into_iter().collect();
        let mut mutated = lines.clone();
        let new_line = format!("{key} = {rest}");
        mutated[k] = &new_line;
        let text = mutated.join("\n");

        prop_assert!(parse_config(&text, true).is_err());
        // lenient mode either reports the key or fails on the field it displaced
        match parse_config(&text, false) {
            Ok((_, unknown)) => prop_assert!(unknown.iter().any(|u| u.ends_with(&key))),
            Err(e) => prop_assert_eq!(e.exit_code(), 2),
        }
    }
}
