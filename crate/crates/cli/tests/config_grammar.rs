use clap::Parser;
use oe_lab::bench::Protocol;
use oe_lab::evo::EvoMode;
use oe_lab::losses::{Method, RadialKind};
use oe_lab_cli::config::CliConfig;
use oe_lab_cli::{Cli, Command};

#[test]
fn parses_entries_comments_and_blank_lines() {
    let text = "# experiment\n\nseeds = 0, 1,2\nmethod.kind=bce   # trailing comment\n  protocol = leave_one_out\n";
    let cfg = CliConfig::parse(text).unwrap();
    assert_eq!(cfg.list::<u64>("seeds").unwrap(), [0, 1, 2]);
    assert_eq!(cfg.methods().unwrap(), [Method::Bce]);
    assert_eq!(cfg.get::<Protocol>("protocol").unwrap(), Protocol::LeaveOneOut);
    // untouched keys keep their defaults
    assert_eq!(cfg.raw("dataset.name"), CliConfig::default().raw("dataset.name"));
}

#[test]
fn errors_name_the_line_and_the_key() {
    let err = format!("{:#}", CliConfig::parse("seeds = 1\n\nno equals sign\n").unwrap_err());
    assert!(err.contains("line 3"), "{err}");
    let err = format!("{:#}", CliConfig::parse("seeds = 1\nmethod.knid = hsc\n").unwrap_err());
    assert!(err.contains("line 2") && err.contains("'method.knid'"), "{err}");
    let mut cfg = CliConfig::default();
    assert!(cfg.apply_override("seeds").is_err());
    assert!(cfg.apply_override("nope=1").is_err());
}

#[test]
fn typed_accessors_reject_bad_values() {
    let cfg = CliConfig::parse("seeds = a,b\nmethod.kind = svm\nevo.mode = sideways\n").unwrap();
    assert!(cfg.list::<u64>("seeds").is_err());
    assert!(cfg.methods().is_err());
    assert!(cfg.evo_params().is_err());
}

#[test]
fn optional_values_accept_full_and_all() {
    let cfg = CliConfig::parse("oe.size = 64\nsweep.oe_sizes = 1,4,full\n").unwrap();
    assert_eq!(cfg.optional("oe.size").unwrap(), Some(64));
    assert_eq!(cfg.optional("oe.classes").unwrap(), None);
    assert_eq!(cfg.optional_list("sweep.oe_sizes").unwrap(), [Some(1), Some(4), None]);
}

#[test]
fn methods_pick_up_their_hyperparameters() {
    let cfg = CliConfig::parse("method.kind = hsc,focal,dsad\nmethod.radial = pseudo_huber\nmethod.gamma = 0\nmethod.eta = 3\n").unwrap();
    let methods = cfg.methods().unwrap();
    assert_eq!(methods[0], Method::Hsc { radial: RadialKind::PseudoHuber });
    assert!(matches!(methods[1], Method::Focal { gamma, .. } if gamma == 0.0));
    assert!(matches!(methods[2], Method::Dsad { eta, .. } if eta == 3.0));
    let exp = cfg.experiment(methods[0]).unwrap();
    assert_eq!(exp.classes, (0..10).collect::<Vec<_>>());
}

#[test]
fn command_line_layers_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(&file, "seeds = 5\nevo.mode = minimize\n").unwrap();
    let cli = Cli::parse_from([
        "oe-lab",
        "evolve",
        "--config",
        file.to_str().unwrap(),
        "--set",
        "seeds=6,7",
        "--set",
        "threads=3",
        "--out",
        "x",
    ]);
    let Command::Evolve(args) = &cli.command else { panic!("parsed {:?}", cli.command) };
    let cfg = args.config().unwrap();
    assert_eq!(cfg.list::<u64>("seeds").unwrap(), [6, 7]);
    assert_eq!(cfg.evo_params().unwrap().mode, EvoMode::Minimize);
    assert_eq!(cfg.threads().unwrap(), 3);
    assert!(Cli::try_parse_from(["oe-lab", "bench"]).is_err(), "--out is required");
}

#[test]
fn hash_ignores_location_and_threads_only() {
    let base = CliConfig::default();
    let mut moved = base.clone();
    moved.set("dataset.root", "/elsewhere").unwrap();
    moved.set("threads", "7").unwrap();
    assert_eq!(base.hash("bench"), moved.hash("bench"));
    assert_ne!(base.hash("bench"), base.hash("sweep-oe"));
    moved.set("seeds", "1").unwrap();
    assert_ne!(base.hash("bench"), moved.hash("bench"));
}

#[test]
fn dump_round_trips() {
    let cfg = CliConfig::parse("seeds = 3,4\ntrain.hidden = 8\n").unwrap();
    assert_eq!(CliConfig::parse(&cfg.dump()).unwrap(), cfg);
}
