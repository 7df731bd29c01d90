//! Command-line entry point. Every subcommand takes `--key value` flags
//! (optionally seeded from `--config FILE`), writes its artifacts under
//! `--out DIR` together with a `manifest.txt` of the resolved options, and
//! exits 0 on success, 1 on a usage error and 2 on a runtime failure.

pub mod args;
mod commands;
pub mod csv;

use args::{CliError, Fill, Opt, RunConfig, COMMON};
use commands::{Command, COMMANDS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub fn usage_text() -> String {
    let mut s = String::from("usage: mechlab <command> [--key value ...] --out DIR\n\ncommands:\n");
    for c in COMMANDS {
        s.push_str(&format!("  {:<20}{}\n", c.name, c.about));
    }
    s.push_str("\nrun `mechlab <command> --help` for its options\n");
    s
}

fn opt_line(o: &Opt) -> String {
    let fill = match o.fill {
        Fill::Value(d) => format!(" (default {d})"),
        Fill::Required => " (required)".into(),
        Fill::Optional => String::new(),
        Fill::Repeat => " (repeatable)".into(),
    };
    format!("  --{:<16}{}{fill}\n", o.key, o.help)
}

fn command_help(c: &Command) -> String {
    let mut s = format!("usage: mechlab {}", c.name);
    for p in c.positional {
        s.push_str(&format!(" {p}"));
    }
    s.push_str(&format!(" [options]\n\n{}\n\noptions:\n", c.about));
    for o in c.opts.iter().chain(&COMMON) {
        s.push_str(&opt_line(o));
    }
    s
}

/// Run one command line (without the program name) and return the exit code.
pub fn dispatch(argv: &[String]) -> i32 {
    let Some(name) = argv.first() else {
        eprint!("{}", usage_text());
        return EXIT_USAGE;
    };
    if matches!(name.as_str(), "help" | "--help" | "-h") {
        print!("{}", usage_text());
        return EXIT_OK;
    }
    let Some(cmd) = COMMANDS.iter().find(|c| c.name == name) else {
        eprintln!("error: unknown command `{name}`\n");
        eprint!("{}", usage_text());
        return EXIT_USAGE;
    };
    let cfg = match RunConfig::parse(cmd.name, &argv[1..], cmd.opts, cmd.positional.len()) {
        Ok(cfg) => cfg,
        Err(CliError::Help) => {
            print!("{}", command_help(cmd));
            return EXIT_OK;
        }
        Err(e) => return report(cmd, e),
    };
    let out = cfg.out_dir();
    if let Err(e) = std::fs::create_dir_all(&out) {
        return report(cmd, CliError::Runtime(crate::Error::io(&out, e)));
    }
    let result = (cmd.run)(&cfg);
    let manifest = out.join("manifest.txt");
    if let Err(e) = std::fs::write(&manifest, cfg.manifest()) {
        return report(cmd, CliError::Runtime(crate::Error::io(&manifest, e)));
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report(cmd, e),
    }
}

fn report(cmd: &Command, e: CliError) -> i32 {
    match e {
        CliError::Usage(msg) => {
            eprintln!("error: {msg}\nrun `mechlab {} --help` for usage", cmd.name);
            EXIT_USAGE
        }
        CliError::Runtime(err) => {
            eprintln!("error: {err}");
            EXIT_RUNTIME
        }
        CliError::Help => EXIT_OK,
    }
}
