use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const COUNTRIES: [&str; 2] = ["Avalon", "Borduria"];

/// Wide CSV with a target and twelve smooth predictors per country.
fn write_data(path: &Path) {
    let years: Vec<i32> = (1996..=2023).collect();
    let mut csv = String::from("Country,Indicator,Code");
    for y in &years {
        write!(csv, ",{y}").unwrap();
    }
    csv.push('\n');
    for (c, country) in COUNTRIES.iter().enumerate() {
        let phase = c as f64;
        let driver = |t: usize| ((t as f64) * 0.4 + phase).sin() + 0.03 * t as f64;
        let mut row = |name: &str, code: &str, f: &dyn Fn(usize) -> f64| {
            write!(csv, "{country},{name},{code}").unwrap();
            for t in 0..years.len() {
                write!(csv, ",{}", f(t)).unwrap();
            }
            csv.push('\n');
        };
        row("Stability", "PV.EST", &|t| {
            0.4 * driver(t) - 0.2 + 0.05 * ((t * 7 % 5) as f64 - 2.0) / 2.0
        });
        for k in 0..12 {
            let freq = 0.15 + 0.09 * k as f64;
            let f = move |t: usize| {
                if k == 0 {
                    50.0 + 5.0 * driver(t)
                } else {
                    10.0 * k as f64 + ((t as f64) * freq + k as f64).cos()
                }
            };
            row(&format!("Indicator {k}"), &format!("IND{k:02}"), &f);
        }
    }
    fs::write(path, csv).unwrap();
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_data(&dir.path().join("panel.csv"));
    fs::write(
        dir.path().join("run.cfg"),
        format!(
            "data_path = panel.csv\ncountries = Avalon, Borduria\ntarget_code = PV.EST\noutput_dir = out\n\
             grid.n_estimators = 30\ngrid.learning_rate = 0.3\ngrid.subsample = 1.0\n{extra}"
        ),
    )
    .unwrap();
    dir
}

fn panelcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panelcast"))
        .current_dir(dir)
        .args(args)
        .env_remove("PANELCAST_LOG")
        .output()
        .unwrap()
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = setup("");
    let out = panelcast(dir.path(), &["run", "--config", "run.cfg"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for country in ["avalon", "borduria"] {
        for file in [
            "forecast.csv",
            "report.json",
            "ranking.csv",
            "predictors.csv",
            "chart.svg",
        ] {
            assert!(
                dir.path().join("out").join(country).join(file).is_file(),
                "{country}/{file}"
            );
        }
    }
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let forecast = fs::read_to_string(dir.path().join("out/avalon/forecast.csv")).unwrap();
    assert_eq!(
        forecast.lines().filter(|l| l.ends_with(",future")).count(),
        5
    );
}

#[test]
fn overrides_apply() {
    let dir = setup("");
    let out = panelcast(
        dir.path(),
        &[
            "run",
            "--config",
            "run.cfg",
            "--country",
            "Borduria",
            "--output",
            "elsewhere",
            "--seed",
            "9",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("elsewhere/borduria/report.json").is_file());
    assert!(!dir.path().join("elsewhere/avalon").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = setup("");
    for output in ["a", "b"] {
        let out = panelcast(
            dir.path(),
            &["run", "--config", "run.cfg", "--output", output],
        );
        assert_eq!(out.status.code(), Some(0));
    }
    for country in ["avalon", "borduria"] {
        for file in [
            "forecast.csv",
            "report.json",
            "ranking.csv",
            "predictors.csv",
            "chart.svg",
        ] {
            let a = fs::read(dir.path().join("a").join(country).join(file)).unwrap();
            let b = fs::read(dir.path().join("b").join(country).join(file)).unwrap();
            assert_eq!(a, b, "{country}/{file}");
        }
    }
}

#[test]
fn unknown_country_is_a_partial_failure() {
    let dir = setup("");
    let out = panelcast(
        dir.path(),
        &[
            "run",
            "--config",
            "run.cfg",
            "--country",
            "Avalon",
            "--country",
            "Atlantis",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Atlantis"));
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("Atlantis,error,")));
}

#[test]
fn config_errors_exit_two() {
    let dir = setup("horizon_years = 5\n");
    let out = panelcast(dir.path(), &["run", "--config", "run.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon_years"));

    let dir = setup("horizon = 0\n");
    assert_eq!(
        panelcast(dir.path(), &["evaluate", "--config", "run.cfg"])
            .status
            .code(),
        Some(2)
    );

    let dir = setup("");
    assert_eq!(
        panelcast(dir.path(), &["run", "--config", "missing.cfg"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_data_file_exits_two() {
    let dir = setup("");
    fs::remove_file(dir.path().join("panel.csv")).unwrap();
    let out = panelcast(dir.path(), &["run", "--config", "run.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_skips_the_forecast() {
    let dir = setup("");
    let out = panelcast(dir.path(), &["evaluate", "--config", "run.cfg"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let forecast = fs::read_to_string(dir.path().join("out/avalon/forecast.csv")).unwrap();
    assert_eq!(forecast.lines().count(), 1 + 28);
    assert!(!forecast.contains("future"));
}

#[test]
fn rank_lists_selected_predictors() {
    let dir = setup("edr_k = 3\n");
    let out = panelcast(dir.path(), &["rank", "--config", "run.cfg"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("Avalon\t")).unwrap();
    assert_eq!(line.split('\t').nth(1).unwrap().split(',').count(), 3);
    assert!(line.contains("IND00"));
    let ranking = fs::read_to_string(dir.path().join("out/avalon/ranking.csv")).unwrap();
    assert_eq!(
        ranking.lines().next().unwrap(),
        "indicator_id,distance,similarity,rank"
    );
    assert_eq!(ranking.lines().count(), 1 + 12);
    assert!(!dir.path().join("out/avalon/forecast.csv").exists());
}
