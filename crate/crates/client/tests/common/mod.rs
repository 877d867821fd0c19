#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use voxsearch_client::ClientConfig;
use voxsearch_core::audio::{write_wav, AudioClip};
use voxsearch_core::keyfile::Keys;
use voxsearch_core::mfcc::MfccConfig;
use voxsearch_core::ringhe::HeParams;
use voxsearch_server::Store;

pub struct Harness {
    pub store: Arc<Store>,
    pub config: ClientConfig,
    pub dir: tempfile::TempDir,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Harness {
    /// In-process server at ring degree 64 with a matching key file.
    pub async fn start() -> Self {
        Self::start_with(HeParams::recommended(64).unwrap(), HeParams::recommended(64).unwrap()).await
    }

    pub async fn start_with(server_params: HeParams, key_params: HeParams) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::create(&dir.path().join("store"), server_params).unwrap());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let server = tokio::spawn(voxsearch_server::http::serve(
            listener,
            store.clone(),
            std::future::pending(),
        ));
        let key_file = dir.path().join("keys.json");
        Keys::generate(key_params, &mut rand::rng())
            .unwrap()
            .save(&key_file)
            .unwrap();
        let config = ClientConfig {
            server_url: url,
            key_file,
            device_id: "kitchen".into(),
            labels_file: dir.path().join("labels.json"),
            thresholds_file: dir.path().join("thresholds.json"),
            mfcc: MfccConfig::default(),
        };
        Self {
            store,
            config,
            dir,
            server,
        }
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, bytes).unwrap();
        path
    }
}

impl Drop for Harness {
    fn drop(&mut self) {
        self.server.abort();
    }
}

pub fn tone_wav(freq: f64, secs: f64) -> Vec<u8> {
    let rate = 16_000;
    let n = (secs * rate as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            0.4 * (2.0 * std::f64::consts::PI * freq * t).sin()
                + 0.01 * (2.0 * std::f64::consts::PI * 3.0 * freq * t).sin()
        })
        .collect();
    write_wav(&AudioClip::new(samples, rate).unwrap()).unwrap()
}
