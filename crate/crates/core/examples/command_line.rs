//! The command-line tool driven in-process: synthesize a scene, estimate
//! flow with priors from its velocity file, evaluate, and render maps.
//!
//! cargo run --release --example command_line

fn opcm(args: &[&str]) {
    let mut argv = vec!["opcm"];
    argv.extend_from_slice(args);
    println!("$ {}", argv.join(" "));
    let code = opcm::cli::run(argv);
    assert_eq!(code, 0, "exit code {code}");
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (data, out) = (d("data"), d("out"));
    let (events, calib, vel) = (format!("{data}/events.csv"), format!("{data}/calib.json"), format!("{data}/velocity.csv"));

    opcm(&["synth", "--kind", "textured_plane", "--vel=0.05,0,1", "--out", &data]);
    // Match the 0.1 s ground-truth window instead of the preset event count.
    opcm(&["--quiet", "estimate", "--events", &events, "--calib", &calib, "--vel", &vel, "--t0", "0", "--dur", "0.1", "--out", &out]);
    opcm(&["eval", "--pred", &format!("{out}/flow_0000.flo"), "--gt", &format!("{data}/flow.flo"), "--events", &events]);
    opcm(&["omap", "--vel=0.05,0,1", "--omega=0,0,0.5", "--calib", &calib, "--out", &out]);

    let summary = std::fs::read_to_string(format!("{out}/summary_0000.json")).expect("summary");
    println!("{summary}");
    for entry in std::fs::read_dir(&out).expect("out dir") {
        println!("wrote {}", entry.expect("entry").file_name().to_string_lossy());
    }
}
