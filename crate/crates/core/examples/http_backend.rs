//! Talk to an inference service over the wire contract. Without
//! EAGERS_BASE_URL, a local stub serving the planted mock stands in.

use eagers::backends::http::HttpBackend;
use eagers::backends::mock::{PlantedBackend, PlantedMode};
use eagers::backends::serve::{serve, ServeOptions};
use eagers::backends::BackendConfig;
use eagers::synth::{write_planted_corpus, SynthOptions};
use eagers::{Error, PipelineConfig, Runner};

fn main() -> eagers::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| Error::Config(e.to_string()))?;
    let corpus = write_planted_corpus(
        dir.path(),
        &SynthOptions {
            questions: 5,
            ..SynthOptions::default()
        },
    )?;

    let (_stub, url) = match std::env::var("EAGERS_BASE_URL") {
        Ok(u) => (None, u.parse().map_err(|e| Error::Config(format!("{e}")))?),
        Err(_) => {
            let backend = PlantedBackend::new(corpus.answer_key(), PlantedMode::Faithful, 0);
            let stub = serve(backend, "127.0.0.1:0", ServeOptions { workers: 4, ..Default::default() })?;
            let url = stub.url();
            (Some(stub), url)
        }
    };
    println!("backend at {url}");
    let mut cfg = BackendConfig::new(url);
    cfg.max_in_flight = 4;
    let http = HttpBackend::new(cfg)?;

    let runner = Runner::new(PipelineConfig::default(), http, "http", &corpus.root)?;
    let report = runner.run_split(&corpus.records())?;
    println!(
        "{}: EM {:.1}  ANLS {:.1}  avg {:.3}s per question (wall clock)",
        report.label, report.em_percent, report.anls_percent, report.timing.mean_seconds
    );
    Ok(())
}
