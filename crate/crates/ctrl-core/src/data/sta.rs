//! Tab-separated annotation files.
//!
//! Two companion files describe a dataset:
//! - videos: `video_id<TAB>length_frames<TAB>fps`
//! - annotations: `video_id<TAB>start_seconds<TAB>end_seconds<TAB>sentence`
//!
//! Complex queries reuse the annotation layout with a literal `#complex`
//! trailing column. Annotation times are seconds on disk and frames in
//! memory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::{sentence_ref, ComplexAnnotation, Dataset, SentenceAnnotation, Video};
use crate::error::{Error, Result};
use crate::geometry::Interval;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

pub fn write_videos(path: &Path, videos: &[Video]) -> Result<()> {
    let mut out = String::new();
    for v in videos {
        writeln!(out, "{}\t{}\t{}", v.id, v.length, v.fps).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_videos(path: &Path) -> Result<Vec<Video>> {
    let text = std::fs::read_to_string(path)?;
    let mut videos = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, lineno, format!("expected 3 fields, got {}", fields.len())));
        }
        let length: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad length `{}`", fields[1])))?;
        let fps: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad fps `{}`", fields[2])))?;
        if let Some(prev) = seen.insert(fields[0].to_string(), lineno) {
            return Err(parse_err(
                path,
                lineno,
                format!("duplicate video id `{}` (first on line {prev})", fields[0]),
            ));
        }
        videos.push(Video::new(fields[0], length, fps).map_err(|e| {
            parse_err(path, lineno, e.to_string())
        })?);
    }
    Ok(videos)
}

struct ParsedLine {
    video_id: String,
    start_frames: f64,
    end_frames: f64,
    text: String,
}

fn parse_annotation_line(
    path: &Path,
    lineno: usize,
    line: &str,
    videos: &BTreeMap<&str, &Video>,
    expect_complex_tag: bool,
) -> Result<ParsedLine> {
    let fields: Vec<&str> = line.split('\t').collect();
    let expected = if expect_complex_tag { 5 } else { 4 };
    if fields.len() != expected {
        return Err(parse_err(
            path,
            lineno,
            format!("expected {expected} fields, got {}", fields.len()),
        ));
    }
    if expect_complex_tag && fields[4] != "#complex" {
        return Err(parse_err(path, lineno, format!("expected `#complex` tag, got `{}`", fields[4])));
    }
    let video = videos.get(fields[0]).copied().ok_or_else(|| {
        parse_err(path, lineno, format!("unknown video id `{}`", fields[0]))
    })?;
    let start_s: f64 = fields[1]
        .parse()
        .map_err(|_| parse_err(path, lineno, format!("bad start time `{}`", fields[1])))?;
    let end_s: f64 = fields[2]
        .parse()
        .map_err(|_| parse_err(path, lineno, format!("bad end time `{}`", fields[2])))?;
    let text = fields[3].trim();
    if text.is_empty() {
        return Err(parse_err(path, lineno, "empty sentence"));
    }
    let start = video.seconds_to_frames(start_s);
    let end = video.seconds_to_frames(end_s);
    if start >= end {
        return Err(parse_err(path, lineno, format!("start {start_s} is not before end {end_s}")));
    }
    Ok(ParsedLine {
        video_id: video.id.clone(),
        start_frames: start,
        end_frames: end,
        text: text.to_string(),
    })
}

/// Clamp a parsed span into video bounds, or reject it in strict mode.
fn bounded_span(
    path: &Path,
    lineno: usize,
    parsed: &ParsedLine,
    video: &Video,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<Interval> {
    let (mut s, mut e) = (parsed.start_frames, parsed.end_frames);
    if s < 0.0 || e > video.length {
        if strict {
            return Err(parse_err(
                path,
                lineno,
                format!("span [{s}, {e}) outside video bounds [0, {})", video.length),
            ));
        }
        s = s.max(0.0);
        e = e.min(video.length);
        if s >= e {
            return Err(parse_err(path, lineno, "span lies entirely outside the video"));
        }
        warnings.push(format!(
            "{}:{lineno}: span clamped to [{s}, {e}) for video {}",
            path.display(),
            video.id
        ));
    }
    Interval::new(s, e).map_err(|err| parse_err(path, lineno, err.to_string()))
}

/// Read sentence annotations against a known video table. Embedding refs are
/// assigned per video in file order (`<video>#s<index>`).
pub fn read_annotations(
    path: &Path,
    videos: &[Video],
    strict: bool,
) -> Result<(Vec<SentenceAnnotation>, Vec<String>)> {
    let by_id: BTreeMap<&str, &Video> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    let text = std::fs::read_to_string(path)?;
    let mut annotations = Vec::new();
    let mut warnings = Vec::new();
    let mut per_video_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_annotation_line(path, lineno, line, &by_id, false)?;
        let video = by_id[parsed.video_id.as_str()];
        let span = bounded_span(path, lineno, &parsed, video, strict, &mut warnings)?;
        let idx = per_video_counts.entry(parsed.video_id.clone()).or_insert(0);
        annotations.push(SentenceAnnotation {
            embedding_ref: sentence_ref(&parsed.video_id, *idx),
            video_id: parsed.video_id,
            text: parsed.text,
            span,
        });
        *idx += 1;
    }
    Ok((annotations, warnings))
}

/// Load the video table and annotation file into one validated dataset.
pub fn load_dataset(
    videos_path: &Path,
    annotations_path: &Path,
    strict: bool,
) -> Result<(Dataset, Vec<String>)> {
    let videos = read_videos(videos_path)?;
    let (annotations, warnings) = read_annotations(annotations_path, &videos, strict)?;
    Ok((Dataset { videos, annotations }, warnings))
}

pub fn write_annotations(
    path: &Path,
    annotations: &[SentenceAnnotation],
    videos: &[Video],
) -> Result<()> {
    let by_id: BTreeMap<&str, &Video> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    let mut out = String::new();
    for a in annotations {
        let video = by_id.get(a.video_id.as_str()).ok_or_else(|| {
            Error::InvalidArgument(format!("annotation references unknown video `{}`", a.video_id))
        })?;
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            a.video_id,
            video.frames_to_seconds(a.span.start()),
            video.frames_to_seconds(a.span.end()),
            a.text
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_complex(path: &Path, queries: &[ComplexAnnotation], videos: &[Video]) -> Result<()> {
    let by_id: BTreeMap<&str, &Video> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    let mut out = String::new();
    for q in queries {
        let video = by_id.get(q.video_id.as_str()).ok_or_else(|| {
            Error::InvalidArgument(format!("complex query references unknown video `{}`", q.video_id))
        })?;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t#complex",
            q.video_id,
            video.frames_to_seconds(q.span.start()),
            video.frames_to_seconds(q.span.end()),
            q.text
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read complex-query lines (5 columns with a `#complex` tag). Components
/// are not stored in the file; callers rebuild them from the annotations.
pub fn read_complex(path: &Path, videos: &[Video]) -> Result<Vec<(String, Interval, String)>> {
    let by_id: BTreeMap<&str, &Video> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_annotation_line(path, lineno, line, &by_id, true)?;
        let span = Interval::new(parsed.start_frames, parsed.end_frames)
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        out.push((parsed.video_id, span, parsed.text));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let vids = write_tmp(&dir, "videos.tsv", "v0\t100\t1\n");
        let anns = write_tmp(&dir, "annotations.sta", "");
        let (ds, warnings) = load_dataset(&vids, &anns, true).unwrap();
        assert_eq!(ds.videos.len(), 1);
        assert!(ds.annotations.is_empty());
        assert!(warnings.is_empty());
    }

    #[test]
    fn single_line_round_trips_with_fps_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let vids = write_tmp(&dir, "videos.tsv", "v0\t100\t5\n");
        let anns = write_tmp(&dir, "annotations.sta", "v0\t2\t10\ta person waves\n");
        let (ds, _) = load_dataset(&vids, &anns, true).unwrap();
        assert_eq!(ds.annotations.len(), 1);
        let a = &ds.annotations[0];
        // 2 s * 5 fps = 10 frames
        assert_eq!((a.span.start(), a.span.end()), (10.0, 50.0));
        assert_eq!(a.embedding_ref, "v0#s0");

        let out = dir.path().join("again.sta");
        write_annotations(&out, &ds.annotations, &ds.videos).unwrap();
        let (again, _) = read_annotations(&out, &ds.videos, true).unwrap();
        assert_eq!(again, ds.annotations);
    }

    #[test]
    fn inverted_span_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let vids = write_tmp(&dir, "videos.tsv", "v0\t100\t1\n");
        let anns = write_tmp(&dir, "annotations.sta", "v0\t5\t5\tno duration\n");
        let err = load_dataset(&vids, &anns, false).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }

    #[test]
    fn out_of_bounds_span_strict_vs_lenient() {
        let dir = tempfile::tempdir().unwrap();
        let vids = write_tmp(&dir, "videos.tsv", "v0\t100\t1\n");
        let anns = write_tmp(&dir, "annotations.sta", "v0\t50\t150\truns past the end\n");
        assert!(load_dataset(&vids, &anns, true).is_err());
        let (ds, warnings) = load_dataset(&vids, &anns, false).unwrap();
        assert_eq!(ds.annotations[0].span.end(), 100.0);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn complex_lines_require_the_tag() {
        let dir = tempfile::tempdir().unwrap();
        let vids = write_tmp(&dir, "videos.tsv", "v0\t100\t1\n");
        let videos = read_videos(&vids).unwrap();
        let good = write_tmp(&dir, "good.sta", "v0\t0\t40\ttwo things happen\t#complex\n");
        assert_eq!(read_complex(&good, &videos).unwrap().len(), 1);
        let bad = write_tmp(&dir, "bad.sta", "v0\t0\t40\ttwo things happen\toops\n");
        assert!(read_complex(&bad, &videos).is_err());
    }
}
