use pixtrack_wasm::{blob_cost, simulate_and_track_json, warp_blob};

#[test]
fn zero_flow_keeps_blob_in_place() {
    let (rgba, _) = warp_blob(32, 24, (10.0, 12.0), 2.0, (0.0, 0.0)).unwrap();
    assert_eq!(rgba.len(), 32 * 24 * 4);
    for px in rgba.chunks(4) {
        assert_eq!(px[0], px[1]);
        assert_eq!(px[3], 255);
    }
}

#[test]
fn integer_flow_shifts_blob() {
    let (rgba, _) = warp_blob(32, 24, (10.0, 12.0), 2.0, (-3.0, 0.0)).unwrap();
    // backward warp: output at x samples the input at x + dx
    let red = |x: usize, y: usize| rgba[(y * 32 + x) * 4];
    let green = |x: usize, y: usize| rgba[(y * 32 + x) * 4 + 1];
    assert_eq!(red(10, 12), 255);
    assert_eq!(green(13, 12), 255);
}

#[test]
fn identical_blobs_cost_nothing_and_far_blobs_fail_the_gate() {
    let same = blob_cost(64, 48, (20.0, 20.0, 3.0), (20.0, 20.0, 3.0)).unwrap();
    assert_eq!(same["cost"], 0.0);
    assert_eq!(same["matched"], true);
    let far = blob_cost(64, 48, (10.0, 10.0, 2.0), (50.0, 40.0, 2.0)).unwrap();
    assert!((far["cost"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(far["matched"], false);
}

#[test]
fn clean_scene_round_trips_through_json() {
    let v = simulate_and_track_json(1, 3, 20, 0.0, false, false).unwrap();
    assert_eq!(v["metrics"]["mota"], 1.0);
    assert_eq!(v["tracks"].as_array().unwrap().len(), 20);
    assert_eq!(v["truth"][0].as_array().unwrap().len(), 3);
    let text = v.to_string();
    let back: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(back["metrics"], v["metrics"]);
    assert_eq!(back["tracks"][5].as_array().unwrap().len(), 3);
}

#[test]
fn invalid_requests_are_errors() {
    assert!(warp_blob(0, 10, (1.0, 1.0), 1.0, (0.0, 0.0)).is_err());
    assert!(simulate_and_track_json(0, 2, 0, 0.0, false, false).is_err());
}
