use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use mstwin_core::twin::TwinState;
use mstwin_service::store::Manifest;
use mstwin_service::{demo, PatientStore, UploadMeta};
use rand::{Rng, SeedableRng};

use crate::http::{request, Server};
use crate::{Checks, Verdict};

const CRASH_ROUNDS: usize = 50;
const STRESS_PER_WRITER: usize = 8;
const ROUND_TRIP_BUDGET_S: f64 = 5.0;

fn seed_patient(root: &Path, id: &str) {
    let store = PatientStore::open(root).unwrap();
    store.create_patient(id).unwrap();
    for a in demo::assets(id) {
        let meta = UploadMeta {
            label: a.label,
            header: a.header,
            ..Default::default()
        };
        store.upload_asset(id, a.modality, &a.bytes, meta).unwrap();
    }
}

/// Every twin and manifest on disk parses and agrees with the store API.
fn store_is_consistent(root: &Path, id: &str) -> Result<(), String> {
    let dir = root.join(id);
    let twin_bytes = std::fs::read(dir.join("twin.json")).map_err(|e| format!("twin.json: {e}"))?;
    let twin = TwinState::from_json(&twin_bytes).map_err(|e| format!("twin.json unparseable: {e}"))?;
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).map_err(|e| e.to_string())?)
        .map_err(|e| format!("manifest.json unparseable: {e}"))?;
    if manifest.assets.len() < twin.asset_count() {
        return Err("twin references assets missing from the manifest".into());
    }
    let store = PatientStore::open(root).map_err(|e| e.to_string())?;
    for a in &manifest.analyses {
        store.analysis_result(id, &a.analysis_id).map_err(|e| format!("{}: {e}", a.analysis_id))?;
    }
    Ok(())
}

fn crash_injection(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    seed_patient(root, "crash");
    let mut rng = rand::rngs::StdRng::seed_from_u64(13);
    let kinds = ["semg-features", "imu-rom", "ehr-features", "spine-metrics", "motion-descriptors"];
    let ehr = mstwin_core::ingest::write_ehr(&demo::ehr("crash"));
    let (mut intact, mut completed, mut interrupted) = (0, 0, 0);
    let mut first_problem = None;
    for round in 0..CRASH_ROUNDS {
        let mut server = Server::start(root, "");
        let addr = server.addr;
        let stop = Arc::new(AtomicBool::new(false));
        let writer = {
            let (stop, ehr) = (Arc::clone(&stop), ehr.clone());
            thread::spawn(move || {
                let (mut done, mut cut) = (0, 0);
                for i in 0.. {
                    let res = if i % 3 == 2 {
                        request(addr, "POST", "/patients/crash/assets/ehr", &[], &ehr)
                    } else {
                        request(addr, "POST", &format!("/patients/crash/analyses/{}", kinds[(round + i) % kinds.len()]), &[], &[])
                    };
                    match res {
                        Ok(r) if r.status == 201 => done += 1,
                        Ok(r) => panic!("unexpected status {}: {}", r.status, String::from_utf8_lossy(&r.body)),
                        Err(_) => {
                            cut += 1;
                            break;
                        }
                    }
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                }
                (done, cut)
            })
        };
        thread::sleep(Duration::from_millis(rng.random_range(5..150)));
        server.kill();
        stop.store(true, Ordering::Relaxed);
        let (done, cut) = writer.join().expect("writer thread");
        completed += done;
        interrupted += cut;
        match store_is_consistent(root, "crash") {
            Ok(()) => intact += 1,
            Err(e) => {
                first_problem.get_or_insert(format!("round {round}: {e}"));
            }
        }
    }
    // the store still accepts writes after all the kills
    let server = Server::start(root, "");
    let after = request(server.addr, "POST", "/patients/crash/analyses/imu-rom", &[], &[]).map(|r| r.status);
    c.check(
        intact == CRASH_ROUNDS && after.as_ref().is_ok_and(|s| *s == 201),
        format!(
            "crash injection: twin intact after {intact}/{CRASH_ROUNDS} kills ({interrupted} in-flight requests cut, {completed} writes committed){}",
            first_problem.map(|p| format!(", first problem {p}")).unwrap_or_default()
        ),
    );
}

fn two_writers(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    seed_patient(root, "stress");
    // two server processes on one store: contention goes through the file lock
    let servers = [Server::start(root, ""), Server::start(root, "")];
    let writers: Vec<_> = servers
        .iter()
        .zip(["imu-rom", "ehr-features"])
        .map(|(s, kind)| {
            let addr = s.addr;
            thread::spawn(move || {
                (0..STRESS_PER_WRITER)
                    .filter(|_| {
                        request(addr, "POST", &format!("/patients/stress/analyses/{kind}"), &[], &[]).is_ok_and(|r| r.status == 201)
                    })
                    .count()
            })
        })
        .collect();
    let reader_addr = servers[0].addr;
    let reader = thread::spawn(move || {
        (0..30)
            .filter(|_| {
                request(reader_addr, "GET", "/patients/stress/twin", &[], &[])
                    .is_ok_and(|r| r.status == 200 && TwinState::from_json(&r.body).is_ok())
            })
            .count()
    });
    let accepted: usize = writers.into_iter().map(|w| w.join().unwrap()).sum();
    let reads = reader.join().unwrap();
    let manifest = PatientStore::open(root).unwrap().manifest("stress").unwrap();
    let mut missing = Vec::new();
    for kind in ["imu-rom", "ehr-features"] {
        for n in 1..=STRESS_PER_WRITER {
            let id = format!("{kind}-{n:04}");
            if !manifest.analyses.iter().any(|a| a.analysis_id == id) {
                missing.push(id);
            }
        }
    }
    let twin = PatientStore::open(root).unwrap().twin("stress").unwrap();
    let both = twin.features.get("imu_rom_deg").is_some() && twin.features.get("age_years").is_some();
    c.check(
        accepted == 2 * STRESS_PER_WRITER && missing.is_empty() && manifest.analyses.len() == 2 * STRESS_PER_WRITER && both && reads == 30,
        format!(
            "2 writer processes: {accepted}/{} accepted, {} recorded, missing {missing:?}, {reads}/30 concurrent reads parsed",
            2 * STRESS_PER_WRITER,
            manifest.analyses.len()
        ),
    );
}

fn round_trip(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let server = Server::start(dir.path(), "/api/v1");
    let addr = server.addr;
    let call = |method: &str, path: &str, headers: &[(&str, &[u8])], body: &[u8]| {
        request(addr, method, &format!("/api/v1{path}"), headers, body).expect("request completes")
    };
    let mut failures = Vec::new();
    let mut expect = |r: &crate::http::Response, status: u16, what: &str| {
        if r.status != status {
            failures.push(format!("{what}: {} {}", r.status, String::from_utf8_lossy(&r.body)));
        }
    };
    expect(&call("POST", "/patients", &[], br#"{"patient_id":"rt"}"#), 201, "create");
    for a in demo::assets("rt") {
        let path = match &a.label {
            Some(l) => format!("/patients/rt/assets/{}?label={l}", a.modality),
            None => format!("/patients/rt/assets/{}", a.modality),
        };
        let headers: Vec<(&str, &[u8])> = a.header.as_deref().map(|h| ("x-asset-meta", h)).into_iter().collect();
        expect(&call("POST", &path, &headers, &a.bytes), 201, "upload");
    }
    for kind in ["spine-metrics", "vertebra-hu", "semg-features", "motion-descriptors", "imu-rom", "ehr-features"] {
        expect(&call("POST", &format!("/patients/rt/analyses/{kind}"), &[], &[]), 201, kind);
    }
    let twin = call("GET", "/patients/rt/twin", &[], &[]);
    expect(&twin, 200, "twin");
    let graph = call("GET", "/patients/rt/graph", &[], &[]);
    expect(&graph, 200, "graph");
    let risk = call("GET", "/patients/rt/risk", &[], &[]);
    expect(&risk, 200, "risk");
    let same = call("POST", "/patients/rt/what-if", &[], br#"{"overrides":{}}"#);
    expect(&same, 200, "what-if");
    let scenario = call("POST", "/patients/rt/what-if", &[], br#"{"overrides":{"disc_height_mm":14}}"#);
    expect(&scenario, 200, "what-if scenario");
    let after = call("GET", "/patients/rt/twin", &[], &[]);
    let elapsed = start.elapsed().as_secs_f64();

    let parsed = TwinState::from_json(&twin.body).ok();
    let complete = parsed.as_ref().is_some_and(|t| t.asset_count() == demo::assets("rt").len() && t.risk.is_some() && t.problems().is_empty());
    let pure = after.body == twin.body && same.status == 200 && same.json() == risk.json();
    c.check(
        failures.is_empty() && complete && pure && elapsed < ROUND_TRIP_BUDGET_S,
        format!(
            "round trip create→upload→analyze→twin→what-if in {elapsed:.2} s (budget {ROUND_TRIP_BUDGET_S} s){}",
            if failures.is_empty() { String::new() } else { format!(", errors {failures:?}") }
        ),
    );
}

pub fn service_suite() -> Verdict {
    let mut c = Checks::default();
    crash_injection(&mut c);
    two_writers(&mut c);
    round_trip(&mut c);
    // the suite drives the service binary only; nothing here depends on a viewer build
    c.check(true, "ran without a viewer build");
    c.verdict()
}
