use std::path::PathBuf;

use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use capsight_core::corpus::ArtifactStore;
use capsight_core::{CorpusSnapshot, Status};
use capsight_ingest::fixture::{build_fixture_corpus, FixtureOptions};
use capsight_service::api::{ClustersResponse, ClusterImages, ProjectionResponse, StatsResponse};
use capsight_service::{ServiceConfig, ServiceHandle, VERSION_HEADER};
use serde_json::Value;
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    store: ArtifactStore,
    images: PathBuf,
}

async fn fixture(opts: FixtureOptions) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    let (store, _) = build_fixture_corpus(&images, &dir.path().join("artifacts"), opts)
        .await
        .unwrap();
    Fixture {
        _dir: dir,
        store,
        images,
    }
}

impl Fixture {
    fn handle(&self) -> (ServiceHandle, Router) {
        let snap = self.store.load_snapshot(1).unwrap();
        let h = ServiceHandle::new(snap, ServiceConfig::new(&self.images, self.store.thumbnails_dir()));
        let r = h.router().unwrap();
        (h, r)
    }
}

fn default_opts() -> FixtureOptions {
    FixtureOptions {
        rejected: 2,
        ..Default::default()
    }
}

async fn get(router: &Router, uri: &str) -> (StatusCode, HeaderMap, Vec<u8>) {
    let resp = router
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    (status, headers, body)
}

async fn get_json(router: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, h, b) = get(router, uri).await;
    assert!(h.contains_key(VERSION_HEADER), "{uri} lacks the version header");
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap_or("")
}

#[tokio::test]
async fn unknown_image_is_404() {
    let f = fixture(default_opts()).await;
    let (_, r) = f.handle();
    for uri in [
        "/api/images/unknown",
        "/api/images/unknown/recommendations",
        "/api/images/unknown/file",
        "/api/images/unknown/thumbnail",
    ] {
        let (s, v) = get_json(&r, uri).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(error_code(&v), "not_found");
    }
    let (s, _, body) = get(&r, "/api/nothing-here").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&serde_json::from_slice(&body).unwrap()), "not_found");
}

#[tokio::test]
async fn recommendations_match_direct_calls() {
    let f = fixture(default_opts()).await;
    let (h, r) = f.handle();
    let snap = h.current().snapshot;
    for id in ["p0002", "p0010", "p0041", "p0079"] {
        for (n, space) in [(5, "caption"), (1, "caption"), (25, "caption"), (5, "visual")] {
            let uri = format!("/api/images/{id}/recommendations?n={n}&space={space}");
            let (s, _, body) = get(&r, &uri).await;
            assert_eq!(s, StatusCode::OK);
            let direct = snap.recommend(id, n, space).unwrap();
            assert_eq!(body, serde_json::to_vec(&direct).unwrap(), "{uri}");
            let v: Value = serde_json::from_slice(&body).unwrap();
            // The neighbor list is the similarity module's exact top-n.
            let top = snap.top_n(id, n, space).unwrap();
            assert_eq!(direct.neighbors, top.neighbors);
            assert_eq!(v["neighbors"].as_array().unwrap().len(), n);
        }
    }
    // n beyond the corpus clamps to every other image.
    let (s, v) = get_json(&r, "/api/images/p0004/recommendations?n=1000").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["neighbors"].as_array().unwrap().len(), 77);

    let (_, v) = get_json(&r, "/api/images/p0004/recommendations").await;
    assert_eq!(v["n"], 5);
    assert_eq!(v["space_name"], "caption");
    let terms = v["explanation_terms"].as_array().unwrap();
    assert!(!terms.is_empty() && terms.len() <= 5);
}

#[tokio::test]
async fn recommendation_errors() {
    let f = fixture(default_opts()).await;
    let (_, r) = f.handle();
    let cases = [
        ("/api/images/p0000/recommendations", StatusCode::NOT_FOUND, "not_found"),
        ("/api/images/p0004/recommendations?n=0", StatusCode::BAD_REQUEST, "bad_param"),
        ("/api/images/p0004/recommendations?n=abc", StatusCode::BAD_REQUEST, "bad_param"),
        ("/api/images/p0004/recommendations?n=5&colour=red", StatusCode::BAD_REQUEST, "bad_param"),
        ("/api/images/p0004/recommendations?space=audio", StatusCode::CONFLICT, "artifact_missing"),
        ("/api/images/p0004/recommendations?n=-1", StatusCode::BAD_REQUEST, "bad_param"),
    ];
    for (uri, status, code) in cases {
        let (s, v) = get_json(&r, uri).await;
        assert_eq!((s, error_code(&v)), (status, code), "{uri}");
    }
}

#[tokio::test]
async fn thirty_two_clusters_with_six_terms() {
    let f = fixture(FixtureOptions {
        n: 320,
        k: 32,
        ..Default::default()
    })
    .await;
    let (h, r) = f.handle();
    let (s, v) = get_json(&r, "/api/clusters").await;
    assert_eq!(s, StatusCode::OK);
    let body: ClustersResponse = serde_json::from_value(v).unwrap();
    assert_eq!(body.clusters.len(), 32);
    for (pos, c) in body.clusters.iter().enumerate() {
        assert_eq!(c.terms.len(), 6, "cluster {} terms {:?}", c.cluster, c.terms);
        assert_eq!(c.order_position, pos);
    }
    let snap = h.current().snapshot;
    let direct: Vec<_> = snap.clusters().unwrap().ordered().into_iter().cloned().collect();
    assert_eq!(body.clusters, direct);
}

#[tokio::test]
async fn cluster_members_and_representative() {
    let f = fixture(default_opts()).await;
    let (h, r) = f.handle();
    let snap = h.current().snapshot;
    let clusters = snap.clusters().unwrap();
    for c in 0..clusters.k {
        let members = clusters.members(c);
        let mut reps = std::collections::BTreeSet::new();
        for _ in 0..20 {
            let (s, v) = get_json(&r, &format!("/api/clusters/{c}/images?page_size=500")).await;
            assert_eq!(s, StatusCode::OK);
            let body: ClusterImages = serde_json::from_value(v).unwrap();
            assert_eq!(body.items, members);
            assert_eq!(body.total, members.len());
            assert!(members.contains(&body.representative.as_str()));
            reps.insert(body.representative);
        }
        assert!(reps.len() > 1, "representative never changes for cluster {c}");
    }
    let (_, v) = get_json(&r, "/api/clusters/0/images?page=2&page_size=3").await;
    assert_eq!(v["items"].as_array().unwrap().len(), 3);
    assert_eq!(v["items"][0], clusters.members(0)[3]);
    let (s, v) = get_json(&r, "/api/clusters/99/images").await;
    assert_eq!((s, error_code(&v)), (StatusCode::NOT_FOUND, "not_found"));
}

#[tokio::test]
async fn search_matches_direct_calls() {
    let f = fixture(default_opts()).await;
    let (h, r) = f.handle();
    let snap = h.current().snapshot;
    for (q, limit) in [("barn", 10), ("subway taxi", 5), ("lighthouse dune gull", 50), ("zeppelin", 10)] {
        let (s, v) = get_json(&r, &format!("/api/search?q={}&limit={limit}", q.replace(' ', "+"))).await;
        assert_eq!(s, StatusCode::OK);
        let direct = snap.search(q, limit).unwrap();
        let hits = v["hits"].as_array().unwrap();
        assert_eq!(hits.len(), direct.len());
        for (got, want) in hits.iter().zip(&direct) {
            assert_eq!(got["image_id"], want.image_id.as_str());
            assert_eq!(got["score"].as_f64().unwrap(), want.score);
            let caption = &snap.caption(&want.image_id).unwrap().text;
            let snippet = got["snippet"].as_str().unwrap();
            assert!(caption.starts_with(snippet.trim_end_matches("...")));
        }
    }
    for uri in ["/api/search?q=", "/api/search", "/api/search?q=barn&limit=0", "/api/search?q=barn&sort=date"] {
        let (s, v) = get_json(&r, uri).await;
        assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "bad_param"), "{uri}");
    }
}

#[tokio::test]
async fn images_paging_and_detail() {
    let f = fixture(default_opts()).await;
    let (h, r) = f.handle();
    let snap = h.current().snapshot;
    let (_, v) = get_json(&r, "/api/images?page=2&page_size=30").await;
    assert_eq!(v["total"], 80);
    assert_eq!(v["items"].as_array().unwrap().len(), 30);
    assert_eq!(v["items"][0]["id"], snap.entries()[30].record.id.as_str());
    let (_, v) = get_json(&r, "/api/images?page=3&page_size=30").await;
    assert_eq!(v["items"].as_array().unwrap().len(), 20);
    let (_, v) = get_json(&r, "/api/images?page=9").await;
    assert_eq!(v["items"].as_array().unwrap().len(), 0);
    for uri in ["/api/images?page=0", "/api/images?page_size=0", "/api/images?page_size=501"] {
        assert_eq!(get_json(&r, uri).await.0, StatusCode::BAD_REQUEST, "{uri}");
    }

    let (_, v) = get_json(&r, "/api/images/p0005").await;
    assert_eq!(v["record"]["id"], "p0005");
    assert_eq!(v["caption"]["text"], snap.caption("p0005").unwrap().text.as_str());
    assert_eq!(v["cluster"], snap.clusters().unwrap().cluster_of("p0005").unwrap());
    let (_, v) = get_json(&r, "/api/images/p0000").await;
    assert_eq!(v["record"]["status"], "rejected");
    assert!(v["caption"].is_null() && v["cluster"].is_null());
}

#[tokio::test]
async fn files_and_cached_thumbnails() {
    let f = fixture(default_opts()).await;
    let (_, r) = f.handle();
    let (s, h, body) = get(&r, "/api/images/p0003/file").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["content-type"], "image/png");
    assert_eq!(body, std::fs::read(f.images.join("p0003.png")).unwrap());

    let (s, h, thumb) = get(&r, "/api/images/p0003/thumbnail").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["content-type"], "image/jpeg");
    let img = image::load_from_memory_with_format(&thumb, image::ImageFormat::Jpeg).unwrap();
    assert_eq!((img.width(), img.height()), (256, 192));
    let cached = capsight_service::thumbs::cache_path(&f.store.thumbnails_dir(), "p0003", 256);
    assert_eq!(std::fs::read(&cached).unwrap(), thumb);
    // Served from the cache even once the source is gone.
    std::fs::remove_file(f.images.join("p0003.png")).unwrap();
    let (s, _, again) = get(&r, "/api/images/p0003/thumbnail").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(again.starts_with(b"{"));
    std::fs::copy(f.images.join("p0004.png"), f.images.join("p0003.png")).unwrap();
    let (_, _, again) = get(&r, "/api/images/p0003/thumbnail").await;
    assert_eq!(again, thumb, "cache hit returns the stored bytes");
}

#[tokio::test]
async fn projection_and_stats() {
    let f = fixture(default_opts()).await;
    let (h, r) = f.handle();
    let snap = h.current().snapshot;
    let (s, v) = get_json(&r, "/api/projection").await;
    assert_eq!(s, StatusCode::OK);
    let p: ProjectionResponse = serde_json::from_value(v).unwrap();
    let direct = snap.projection().unwrap();
    assert_eq!(p.points.len(), direct.ids.len());
    for (pt, (id, xy)) in p.points.iter().zip(direct.ids.iter().zip(&direct.coords)) {
        assert_eq!((&pt.id, pt.x, pt.y), (id, xy[0], xy[1]));
        assert_eq!(pt.cluster, snap.clusters().unwrap().cluster_of(id));
    }

    let (_, v) = get_json(&r, "/api/stats").await;
    let st: StatsResponse = serde_json::from_value(v).unwrap();
    assert_eq!(st.images, 80);
    assert_eq!(st.status_counts["embedded"], 78);
    assert_eq!(st.spaces["caption"], 78);
    assert_eq!(st.spaces["visual"], 78);
    let c = st.captions.unwrap();
    assert_eq!(c.count, 78);
    assert!(c.hedged_count > 0);
}

#[tokio::test]
async fn missing_artifacts_are_409() {
    let f = fixture(default_opts()).await;
    // Captions only: no spaces, clusters or projection.
    let entries = f
        .store
        .load_manifest()
        .unwrap()
        .into_entries()
        .into_iter()
        .map(|mut e| {
            if e.record.status == Status::Embedded {
                e.record.status = Status::Captioned;
            }
            e
        })
        .collect();
    let bare = CorpusSnapshot::builder(1)
        .entries(entries)
        .build()
        .unwrap();
    let h = ServiceHandle::new(bare, ServiceConfig::new(&f.images, f.store.thumbnails_dir()));
    let r = h.router().unwrap();
    for uri in [
        "/api/clusters",
        "/api/clusters/0/images",
        "/api/projection",
        "/api/images/p0004/recommendations",
    ] {
        let (s, v) = get_json(&r, uri).await;
        assert_eq!((s, error_code(&v)), (StatusCode::CONFLICT, "artifact_missing"), "{uri}");
    }
    assert_eq!(get_json(&r, "/api/stats").await.0, StatusCode::OK);
}

#[tokio::test]
async fn swap_bumps_version() {
    let f = fixture(default_opts()).await;
    let (h, r) = f.handle();
    let (_, hd, _) = get(&r, "/api/stats").await;
    assert_eq!(hd[VERSION_HEADER], "1");
    let prev = h.swap_snapshot(f.store.load_snapshot(1).unwrap());
    assert_eq!(prev, 1);
    assert_eq!(h.version(), 2, "identical snapshot still gets a new version");
    let (_, v) = get_json(&r, "/api/stats").await;
    assert_eq!(v["version"], 2);
    h.swap_snapshot(f.store.load_snapshot(10).unwrap());
    assert_eq!(h.version(), 10);
}
