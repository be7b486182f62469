//! Detection JSON:
//! `{"frames":[{"name":"f0001","markers":[{"id":"TL","bbox":[x,y,w,h],"cx":..,"cy":..,"score":..}]}]}`

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BBox, CornerId, DetectError, MarkerObservation};
use crate::geometry::Point2;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub name: String,
    pub markers: Vec<MarkerObservation>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFile {
    frames: Vec<WireFrame>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFrame {
    name: String,
    markers: Vec<WireMarker>,
}

#[derive(Serialize, Deserialize)]
#[serde(try_from = "RawMarker")]
struct WireMarker {
    id: CornerId,
    bbox: [f64; 4],
    cx: f64,
    cy: f64,
    score: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarker {
    id: CornerId,
    bbox: [f64; 4],
    cx: f64,
    cy: f64,
    score: f64,
}

impl TryFrom<RawMarker> for WireMarker {
    type Error = String;

    fn try_from(m: RawMarker) -> Result<Self, Self::Error> {
        let [x, y, w, h] = m.bbox;
        if !m.bbox.iter().chain([&m.cx, &m.cy, &m.score]).all(|v| v.is_finite()) {
            return Err(format!("marker {}: non-finite value", m.id));
        }
        if !(0.0..=1.0).contains(&m.score) {
            return Err(format!("marker {}: field `score` = {} outside [0, 1]", m.id, m.score));
        }
        if x < 0.0 || y < 0.0 || w < 0.0 || h < 0.0 {
            return Err(format!("marker {}: field `bbox` must be non-negative, got {:?}", m.id, m.bbox));
        }
        let bbox = BBox { x, y, w, h };
        if !bbox.contains(Point2::new(m.cx, m.cy)) {
            return Err(format!("marker {}: centre ({}, {}) lies outside its bbox", m.id, m.cx, m.cy));
        }
        Ok(WireMarker { id: m.id, bbox: m.bbox, cx: m.cx, cy: m.cy, score: m.score })
    }
}

impl From<&MarkerObservation> for WireMarker {
    fn from(o: &MarkerObservation) -> Self {
        WireMarker {
            id: o.id,
            bbox: [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h],
            cx: o.center.x,
            cy: o.center.y,
            score: o.score,
        }
    }
}

impl From<WireMarker> for MarkerObservation {
    fn from(m: WireMarker) -> Self {
        let [x, y, w, h] = m.bbox;
        MarkerObservation { id: m.id, bbox: BBox { x, y, w, h }, center: Point2::new(m.cx, m.cy), score: m.score }
    }
}

pub fn parse_detections(text: &str) -> Result<Vec<DetectionFrame>, DetectError> {
    let file: WireFile = serde_json::from_str(text).map_err(|e| DetectError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(file
        .frames
        .into_iter()
        .map(|f| DetectionFrame { name: f.name, markers: f.markers.into_iter().map(Into::into).collect() })
        .collect())
}

pub fn format_detections(frames: &[DetectionFrame]) -> String {
    let file = WireFile {
        frames: frames
            .iter()
            .map(|f| WireFrame { name: f.name.clone(), markers: f.markers.iter().map(Into::into).collect() })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("detections serialise")
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionFrame>, DetectError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| DetectError::Io { path: path.display().to_string(), source })?;
    parse_detections(&text)
}

pub fn write_detections(path: impl AsRef<Path>, frames: &[DetectionFrame]) -> Result<(), DetectError> {
    let path = path.as_ref();
    std::fs::write(path, format_detections(frames) + "\n")
        .map_err(|source| DetectError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_FRAME: &str = r#"{"frames":[{"name":"f0001","markers":[
        {"id":"TL","bbox":[10,10,12,12],"cx":15.5,"cy":15.5,"score":1.0},
        {"id":"TR","bbox":[170,12,12,12],"cx":175.5,"cy":17.5,"score":0.9},
        {"id":"BR","bbox":[172,120,12,12],"cx":177.5,"cy":125.5,"score":0.8},
        {"id":"BL","bbox":[8,118,12,12],"cx":13.5,"cy":123.5,"score":1.0}]}]}"#;

    #[test]
    fn parses_four_markers() {
        let frames = parse_detections(ONE_FRAME).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].name, "f0001");
        assert_eq!(frames[0].markers.len(), 4);
        assert_eq!(frames[0].markers[1].id, CornerId::TopRight);
        assert_eq!(frames[0].markers[1].center, Point2::new(175.5, 17.5));
    }

    #[test]
    fn empty_marker_list() {
        let frames = parse_detections(r#"{"frames":[{"name":"x","markers":[]}]}"#).unwrap();
        assert!(frames[0].markers.is_empty());
    }

    fn parse_err(text: &str) -> (usize, String) {
        match parse_detections(text) {
            Err(DetectError::Parse { line, message, .. }) => (line, message),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_documents() {
        let (_, msg) = parse_err(r#"{"frames":[{"name":"x","markers":[{"id":"XX","bbox":[0,0,1,1],"cx":0,"cy":0,"score":1}]}]}"#);
        assert!(msg.contains("XX"), "{msg}");

        let text = "{\"frames\":[{\"name\":\"x\",\"markers\":[\n{\"id\":\"TL\",\"bbox\":[0,0,1,1],\"cx\":0,\"cy\":0,\"score\":1.5}]}]}";
        let (line, msg) = parse_err(text);
        assert_eq!(line, 2);
        assert!(msg.contains("score"), "{msg}");

        let (_, msg) = parse_err(r#"{"frames":[{"name":"x","markers":[{"id":"TL","bbox":[0,0,1,1],"cx":5,"cy":0,"score":1}]}]}"#);
        assert!(msg.contains("outside its bbox"), "{msg}");

        parse_err(r#"{"frames":[{"name":"x","markers":[{"id":"TL"}]}]}"#);
        parse_err(r#"{"frames":"#);
        parse_err(r#"{"frames":[],"extra":1}"#);
    }

    #[test]
    fn write_then_load_is_lossless() {
        let frames = parse_detections(ONE_FRAME).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        write_detections(&path, &frames).unwrap();
        assert_eq!(load_detections(&path).unwrap(), frames);
        assert!(matches!(load_detections(dir.path().join("missing.json")), Err(DetectError::Io { .. })));
    }
}
