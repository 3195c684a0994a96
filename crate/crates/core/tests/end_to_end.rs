use stepwise_core::erasion::{mine, ErasionConfig};
use stepwise_core::io::{GroundTruthFile, ResultsFile, ScoreFile, ScoreVideo, TraceFile};
use stepwise_core::pipeline::{detect_all, run, step_plan, PipelineConfig};
use stepwise_core::provider::ScoreProvider;
use stepwise_core::sim::{Simulator, SyntheticWorldConfig};

fn cfg() -> PipelineConfig {
    PipelineConfig {
        world: SyntheticWorldConfig {
            n_videos: 10,
            seed: 5,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn f32_and_f64_agree_on_detections() {
    let out = run(&cfg()).unwrap();
    let sim = Simulator::new(&out.world);
    let plan = step_plan(&out.mined.trace, 5, out.mined.handles.len(), None).unwrap();
    let opts = cfg().detect_options();
    let d64 = detect_all::<f64, _>(&sim, &out.world.records(), &out.mined.handles, &plan, &opts).unwrap();
    let d32 = detect_all::<f32, _>(&sim, &out.world.records(), &out.mined.handles, &plan, &opts).unwrap();
    assert_eq!(d64, out.detections);
    let spans = |d: &[stepwise_core::domain::DetectionSegment]| {
        d.iter().map(|x| (x.video_id.clone(), x.class, x.start_snippet, x.end_snippet)).collect::<Vec<_>>()
    };
    // Single precision may flip a borderline snippet; nearly all segments must coincide.
    let a = spans(&d64);
    let b = spans(&d32);
    let shared = a.iter().filter(|s| b.contains(s)).count();
    assert!(shared * 10 >= a.len() * 9, "{shared} of {}", a.len());
}

#[test]
fn score_file_reproduces_simulated_detection() {
    let out = run(&cfg()).unwrap();
    let sim = Simulator::new(&out.world);
    let handles = &out.mined.handles;
    let videos: Vec<ScoreVideo> = out
        .world
        .videos
        .iter()
        .map(|v| ScoreVideo {
            id: v.record.id.clone(),
            fps: v.record.fps,
            frames_per_snippet: v.record.frames_per_snippet,
            labels: v.record.labels.iter().map(|&j| out.world.label_table[j].clone()).collect(),
            steps: handles
                .iter()
                .map(|h| ScoreProvider::<f64>::score(&sim, h, &v.record).unwrap().values().to_rows())
                .collect(),
        })
        .collect();
    let file = ScoreFile::new(out.world.label_table.clone(), videos);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.json");
    file.save(&path).unwrap();
    let (records, provider) = ScoreFile::load(&path).unwrap().provider().unwrap();
    let file_handles = provider.handles(&records).unwrap();
    let plan = step_plan(&out.mined.trace, 5, handles.len(), None).unwrap();
    let dets = detect_all::<f64, _>(&provider, &records, &file_handles, &plan, &cfg().detect_options()).unwrap();
    assert_eq!(dets, out.detections);

    // Mining from the file stops within the stored steps.
    let e = ErasionConfig {
        t_max: handles.len(),
        ..Default::default()
    };
    let mined = mine::<f64, _>(&records, &provider, &e).unwrap();
    assert!(mined.handles.len() <= handles.len());
}

#[test]
fn artifacts_round_trip_through_disk() {
    let c = cfg();
    let out = run(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let trace = TraceFile::new(c.clone(), out.mined.trace.clone(), &out.mined.handles);
    trace.save(&d.join("trace.json")).unwrap();
    let loaded = TraceFile::load(&d.join("trace.json")).unwrap();
    assert_eq!(loaded, trace);
    assert_eq!(loaded.restore(&out.world.records()).unwrap(), out.mined.handles);

    let gt = GroundTruthFile::from_world(&out.world).unwrap();
    gt.save(&d.join("gt.json")).unwrap();
    assert_eq!(GroundTruthFile::load(&d.join("gt.json")).unwrap(), gt);

    let res = ResultsFile::new(c, out.world.label_table.clone(), &out.world.records(), &out.detections).unwrap();
    res.save(&d.join("r.json")).unwrap();
    let back = ResultsFile::load(&d.join("r.json")).unwrap();
    back.validate_against(&gt).unwrap();
    assert_eq!(back.detections().len(), out.detections.len());
}
