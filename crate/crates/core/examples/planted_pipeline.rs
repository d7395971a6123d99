//! Full offline run: synthetic pages with planted evidence, mock models,
//! faithful vs adversarial grounding, and the baseline.

use eagers::backends::mock::{PlantedBackend, PlantedMode};
use eagers::backends::recording::RecordingBackend;
use eagers::report::{render_table, ReportRow};
use eagers::synth::{write_planted_corpus, SynthOptions};
use eagers::{Clock, GridSpec, Mode, PipelineConfig, Runner};

fn main() -> eagers::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| eagers::Error::Config(e.to_string()))?;
    let corpus = write_planted_corpus(dir.path(), &SynthOptions::default())?;
    let records = corpus.records();

    let mut rows = Vec::new();
    for (mode, planted, margin) in [
        (Mode::Eagers, PlantedMode::Faithful, 0.0),
        (Mode::Eagers, PlantedMode::Faithful, 0.15),
        (Mode::Eagers, PlantedMode::Adversarial, 0.0),
        (Mode::Baseline, PlantedMode::Faithful, 0.0),
    ] {
        let cfg = PipelineConfig {
            mode,
            grid: GridSpec::new(5, 5)?,
            margin_fraction: margin,
            ..PipelineConfig::default()
        };
        let backend = RecordingBackend::new(PlantedBackend::new(corpus.answer_key(), planted, 0));
        let tag = format!("mock:{planted:?}");
        let runner = Runner::new(cfg, &backend, &tag, &corpus.root)?
            .with_store(&dir.path().join("out"))
            .with_clock(Clock::Reported);
        let report = runner.run_split(&records)?;
        let n = backend.counts();
        println!(
            "{:<12} {:?}: {} explain, {} embed, {} answer calls",
            report.label, planted, n.explain, n.embed, n.answer
        );
        rows.push(ReportRow::from_report(runner.store().unwrap().run_dir(), &report));
    }
    print!("\n{}", render_table(&rows));
    Ok(())
}
