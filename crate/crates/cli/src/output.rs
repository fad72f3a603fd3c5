use bouquet::{Error, Result};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output directory plus the stamp written into every file.
#[derive(Debug, Clone)]
pub struct Sink {
    pub dir: PathBuf,
    pub config_hash: String,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config_hash: &'a str,
    kind: &'a str,
    data: &'a T,
}

fn io(e: std::io::Error) -> Error {
    Error::Invalid(format!("io: {e}"))
}

impl Sink {
    pub fn new(dir: &Path, config_hash: String) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io)?;
        Ok(Sink { dir: dir.to_path_buf(), config_hash, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn json_string<T: Serialize>(&self, kind: &str, data: &T) -> String {
        let env = Envelope { tool: "bouquet", version: VERSION, config_hash: &self.config_hash, kind, data };
        let mut s = serde_json::to_string_pretty(&env).expect("serializable output");
        s.push('\n');
        s
    }

    pub fn json<T: Serialize>(&mut self, name: &str, kind: &str, data: &T) -> Result<PathBuf> {
        let s = self.json_string(kind, data);
        self.put(name, s.as_bytes())
    }

    /// CSV with a leading `#` comment line carrying the stamp.
    pub fn csv<R: Serialize>(&mut self, name: &str, header: &[&str], rows: &[R]) -> Result<PathBuf> {
        let mut buf = format!("# bouquet {VERSION} config {}\n", self.config_hash).into_bytes();
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            w.write_record(header).map_err(|e| Error::Invalid(format!("csv: {e}")))?;
            for r in rows {
                w.serialize(r).map_err(|e| Error::Invalid(format!("csv: {e}")))?;
            }
            w.flush().map_err(io)?;
        }
        self.put(name, &buf)
    }

    /// RGB8 PNG with the stamp in tEXt chunks.
    pub fn png(&mut self, name: &str, width: u32, height: u32, rgb: &[u8]) -> Result<PathBuf> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, width, height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let err = |e: png::EncodingError| Error::Invalid(format!("png: {e}"));
            enc.add_text_chunk("Software".into(), format!("bouquet {VERSION}")).map_err(err)?;
            enc.add_text_chunk("ConfigHash".into(), self.config_hash.clone()).map_err(err)?;
            let mut w = enc.write_header().map_err(err)?;
            w.write_image_data(rgb).map_err(err)?;
        }
        self.put(name, &buf)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.dir.join(name);
        fs::write(&p, bytes).map_err(io)?;
        self.written.push(p.clone());
        Ok(p)
    }
}
