use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};

use image::RgbImage;

use crate::error::{Error, Result};
use crate::frames;

/// Frames of one video, in presentation order.
pub trait FrameStream: Iterator<Item = Result<RgbImage>> {
    /// What the container claims, when it claims anything.
    fn reported_frame_count(&self) -> Option<usize>;
}

pub trait VideoDecoder: Sync {
    fn open(&self, path: &Path) -> Result<Box<dyn FrameStream>>;
}

/// A "video" stored as a directory of PNG frames, ordered by file name.
#[derive(Debug, Default, Clone, Copy)]
pub struct FrameDirDecoder;

struct DirStream {
    files: std::vec::IntoIter<PathBuf>,
    count: usize,
}

impl Iterator for DirStream {
    type Item = Result<RgbImage>;

    fn next(&mut self) -> Option<Self::Item> {
        self.files.next().map(|p| frames::read_rgb(&p))
    }
}

impl FrameStream for DirStream {
    fn reported_frame_count(&self) -> Option<usize> {
        Some(self.count)
    }
}

impl VideoDecoder for FrameDirDecoder {
    fn open(&self, path: &Path) -> Result<Box<dyn FrameStream>> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let p = entry.map_err(|e| Error::io(path, e))?.path();
            if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                files.push(p);
            }
        }
        files.sort();
        let count = files.len();
        Ok(Box::new(DirStream { files: files.into_iter(), count }))
    }
}

/// Shells out to `ffprobe`/`ffmpeg` and reads raw RGB24 frames from a pipe.
#[derive(Debug, Clone)]
pub struct FfmpegDecoder {
    pub ffmpeg: PathBuf,
    pub ffprobe: PathBuf,
}

impl Default for FfmpegDecoder {
    fn default() -> Self {
        FfmpegDecoder { ffmpeg: "ffmpeg".into(), ffprobe: "ffprobe".into() }
    }
}

struct PipeStream {
    child: Child,
    stdout: ChildStdout,
    path: PathBuf,
    width: u32,
    height: u32,
    reported: Option<usize>,
    done: bool,
}

impl PipeStream {
    fn decode_error(&self, message: String) -> Error {
        Error::Decode { path: self.path.clone(), message }
    }
}

impl Iterator for PipeStream {
    type Item = Result<RgbImage>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut buf = vec![0u8; self.width as usize * self.height as usize * 3];
        let mut filled = 0;
        while filled < buf.len() {
            match self.stdout.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) => {
                    self.done = true;
                    return Some(Err(self.decode_error(e.to_string())));
                }
            }
        }
        if filled < buf.len() {
            self.done = true;
            let status = self.child.wait();
            if filled > 0 {
                return Some(Err(self.decode_error(format!("truncated frame ({filled} bytes)"))));
            }
            return match status {
                Ok(s) if s.success() => None,
                Ok(s) => Some(Err(self.decode_error(format!("ffmpeg exited with {s}")))),
                Err(e) => Some(Err(self.decode_error(e.to_string()))),
            };
        }
        RgbImage::from_raw(self.width, self.height, buf).map(Ok)
    }
}

impl FrameStream for PipeStream {
    fn reported_frame_count(&self) -> Option<usize> {
        self.reported
    }
}

impl Drop for PipeStream {
    fn drop(&mut self) {
        if !self.done {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

impl VideoDecoder for FfmpegDecoder {
    fn open(&self, path: &Path) -> Result<Box<dyn FrameStream>> {
        let decode_err = |message: String| Error::Decode { path: path.to_path_buf(), message };
        let probe = Command::new(&self.ffprobe)
            .args(["-v", "error", "-select_streams", "v:0", "-show_entries", "stream=width,height,nb_frames", "-of", "csv=p=0"])
            .arg(path)
            .output()
            .map_err(|e| decode_err(format!("cannot run {}: {e}", self.ffprobe.display())))?;
        if !probe.status.success() {
            return Err(decode_err(String::from_utf8_lossy(&probe.stderr).trim().to_string()));
        }
        let text = String::from_utf8_lossy(&probe.stdout);
        let fields: Vec<&str> = text.trim().split(',').map(str::trim).collect();
        let (width, height) = match fields.as_slice() {
            [w, h, ..] => (
                w.parse::<u32>().map_err(|_| decode_err(format!("bad width {w:?}")))?,
                h.parse::<u32>().map_err(|_| decode_err(format!("bad height {h:?}")))?,
            ),
            _ => return Err(decode_err(format!("unexpected ffprobe output {text:?}"))),
        };
        let reported = fields.get(2).and_then(|n| n.parse::<usize>().ok());
        let mut child = Command::new(&self.ffmpeg)
            .args(["-v", "error", "-i"])
            .arg(path)
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| decode_err(format!("cannot run {}: {e}", self.ffmpeg.display())))?;
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Box::new(PipeStream {
            child,
            stdout,
            path: path.to_path_buf(),
            width,
            height,
            reported,
            done: false,
        }))
    }
}

/// Frame directories go to [`FrameDirDecoder`], everything else to ffmpeg.
#[derive(Debug, Default, Clone)]
pub struct AutoDecoder {
    pub ffmpeg: FfmpegDecoder,
}

impl VideoDecoder for AutoDecoder {
    fn open(&self, path: &Path) -> Result<Box<dyn FrameStream>> {
        if path.is_dir() {
            FrameDirDecoder.open(path)
        } else {
            self.ffmpeg.open(path)
        }
    }
}
