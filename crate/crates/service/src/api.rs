//! Route handlers. Each one reads the served snapshot once and delegates to
//! the core crate; the JSON shapes below are the whole contract.

use std::collections::BTreeMap;

use axum::body::Body;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use capsight_core::cluster::ClusterSummary;
use capsight_core::corpus::CorpusError;
use capsight_core::textlab::CaptionStats;
use capsight_core::similarity::{OverlapReport, SymmetryReport};
use capsight_core::{Caption, CorpusSnapshot, ImageRecord, SimilarityError};
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::{AppState, ServiceHandle};
use crate::thumbs;

pub const VERSION_HEADER: &str = "x-snapshot-version";
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;
pub const DEFAULT_N: usize = 5;
pub const DEFAULT_SEARCH_LIMIT: usize = 20;
const SNIPPET_CHARS: usize = 160;

type ApiResult<T> = Result<T, ApiError>;

fn with_version(mut resp: Response, version: u64) -> Response {
    resp.headers_mut()
        .insert(VERSION_HEADER, HeaderValue::from(version));
    resp
}

fn error_response(e: ApiError) -> Response {
    let mut resp = (e.status, e.body()).into_response();
    resp.headers_mut().insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("application/json"),
    );
    resp
}

fn json<T: Serialize>(version: u64, result: ApiResult<T>) -> Response {
    let resp = match result.and_then(|v| {
        serde_json::to_vec(&v).map_err(|e| ApiError::internal(e.to_string()))
    }) {
        Ok(body) => (
            StatusCode::OK,
            [(header::CONTENT_TYPE, "application/json")],
            body,
        )
            .into_response(),
        Err(e) => error_response(e),
    };
    with_version(resp, version)
}

fn bytes(version: u64, result: ApiResult<(&'static str, Vec<u8>)>) -> Response {
    let resp = match result {
        Ok((ctype, body)) => {
            (StatusCode::OK, [(header::CONTENT_TYPE, ctype)], Body::from(body)).into_response()
        }
        Err(e) => error_response(e),
    };
    with_version(resp, version)
}

fn params<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_param(e.body_text()))
}

fn similarity_error(e: SimilarityError) -> ApiError {
    match e {
        SimilarityError::UnknownSpace(_) | SimilarityError::EmptySpace(_) => {
            ApiError::artifact_missing(e.to_string())
        }
        SimilarityError::UnknownSeed(_) | SimilarityError::NoVector { .. } => {
            ApiError::not_found(e.to_string())
        }
        SimilarityError::InvalidN => ApiError::bad_param(e.to_string()),
        other => ApiError::internal(other.to_string()),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoParams {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageParams {
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

struct Page {
    page: usize,
    page_size: usize,
}

impl PageParams {
    fn resolve(&self) -> ApiResult<Page> {
        let page = self.page.unwrap_or(1);
        let page_size = self.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
        if page == 0 {
            return Err(ApiError::bad_param("page starts at 1"));
        }
        if page_size == 0 || page_size > MAX_PAGE_SIZE {
            return Err(ApiError::bad_param(format!("page_size must lie in 1..={MAX_PAGE_SIZE}")));
        }
        Ok(Page { page, page_size })
    }
}

impl Page {
    fn slice<'a, T>(&self, items: &'a [T]) -> &'a [T] {
        let start = (self.page - 1).saturating_mul(self.page_size).min(items.len());
        let end = start.saturating_add(self.page_size).min(items.len());
        &items[start..end]
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ImagesPage {
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<ImageRecord>,
}

pub(crate) async fn list_images(
    State(h): State<ServiceHandle>,
    q: Result<Query<PageParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let snap = &served.snapshot;
    json(served.version, (|| {
        let page = params(q)?.resolve()?;
        let records: Vec<&ImageRecord> = snap.entries().iter().map(|e| &e.record).collect();
        Ok(ImagesPage {
            page: page.page,
            page_size: page.page_size,
            total: records.len(),
            items: page.slice(&records).iter().map(|r| (*r).clone()).collect(),
        })
    })())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ImageDetail {
    pub record: ImageRecord,
    pub caption: Option<Caption>,
    pub cluster: Option<usize>,
}

fn record<'a>(snap: &'a CorpusSnapshot, id: &str) -> ApiResult<&'a ImageRecord> {
    snap.record(id)
        .ok_or_else(|| ApiError::not_found(format!("no image with id {id}")))
}

pub(crate) async fn get_image(
    State(h): State<ServiceHandle>,
    Path(id): Path<String>,
    q: Result<Query<NoParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let snap = &served.snapshot;
    json(served.version, (|| {
        params(q)?;
        Ok(ImageDetail {
            record: record(snap, &id)?.clone(),
            caption: snap.caption(&id).cloned(),
            cluster: snap.clusters().and_then(|c| c.cluster_of(&id)),
        })
    })())
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

fn source_file(state: &AppState, snap: &CorpusSnapshot, id: &str) -> ApiResult<std::path::PathBuf> {
    let rec = record(snap, id)?;
    thumbs::resolve_source(&state.config.image_root, &rec.source_path)
        .ok_or_else(|| ApiError::not_found(format!("image {id} has an unusable source path")))
}

pub(crate) async fn image_file(
    State(h): State<ServiceHandle>,
    Path(id): Path<String>,
    q: Result<Query<NoParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let result = async {
        params(q)?;
        let path = source_file(&h.state, &served.snapshot, &id)?;
        let body = tokio::fs::read(&path)
            .await
            .map_err(|e| ApiError::not_found(format!("image file for {id}: {e}")))?;
        Ok((content_type(&path), body))
    }
    .await;
    bytes(served.version, result)
}

pub(crate) async fn image_thumbnail(
    State(h): State<ServiceHandle>,
    Path(id): Path<String>,
    q: Result<Query<NoParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let result = async {
        params(q)?;
        let source = source_file(&h.state, &served.snapshot, &id)?;
        if !source.is_file() {
            return Err(ApiError::not_found(format!("image file for {id} is missing")));
        }
        let cfg = &h.state.config;
        let cache = thumbs::cache_path(&cfg.thumbnail_dir, &id, cfg.thumbnail_long_side);
        let (size, quality) = (cfg.thumbnail_long_side, cfg.thumbnail_quality);
        let body = tokio::task::spawn_blocking(move || thumbs::thumbnail(&source, &cache, size, quality))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(|e| ApiError::internal(format!("thumbnail for {id}: {e}")))?;
        Ok(("image/jpeg", body))
    }
    .await;
    bytes(served.version, result)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendParams {
    pub n: Option<usize>,
    pub space: Option<String>,
}

pub(crate) async fn recommendations(
    State(h): State<ServiceHandle>,
    Path(id): Path<String>,
    q: Result<Query<RecommendParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let snap = &served.snapshot;
    json(served.version, (|| {
        let p = params(q)?;
        let n = p.n.unwrap_or(DEFAULT_N);
        if n == 0 {
            return Err(ApiError::bad_param("n must be at least 1"));
        }
        let space = p.space.unwrap_or_else(|| h.state.config.default_space.clone());
        record(snap, &id)?;
        snap.recommend(&id, n, &space).map_err(similarity_error)
    })())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ClustersResponse {
    pub k: usize,
    pub space_name: String,
    /// In display order.
    pub clusters: Vec<ClusterSummary>,
}

pub(crate) async fn clusters(
    State(h): State<ServiceHandle>,
    q: Result<Query<NoParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let snap = &served.snapshot;
    json(served.version, (|| {
        params(q)?;
        let c = snap
            .clusters()
            .ok_or_else(|| ApiError::artifact_missing("no cluster assignment in this snapshot"))?;
        Ok(ClustersResponse {
            k: c.k,
            space_name: c.space_name.clone(),
            clusters: c.ordered().into_iter().cloned().collect(),
        })
    })())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ClusterImages {
    pub cluster: ClusterSummary,
    /// Chosen uniformly at random among all members on every request.
    pub representative: String,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<String>,
}

pub(crate) async fn cluster_images(
    State(h): State<ServiceHandle>,
    Path(cluster): Path<String>,
    q: Result<Query<PageParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let snap = &served.snapshot;
    json(served.version, (|| {
        let page = params(q)?.resolve()?;
        let c = snap
            .clusters()
            .ok_or_else(|| ApiError::artifact_missing("no cluster assignment in this snapshot"))?;
        let summary = cluster
            .parse::<usize>()
            .ok()
            .and_then(|i| c.summaries.get(i))
            .ok_or_else(|| ApiError::not_found(format!("no cluster {cluster}")))?;
        let members = c.members(summary.cluster);
        let representative = members
            .choose(&mut rand::rng())
            .map(|s| s.to_string())
            .ok_or_else(|| ApiError::internal("empty cluster"))?;
        Ok(ClusterImages {
            cluster: summary.clone(),
            representative,
            page: page.page,
            page_size: page.page_size,
            total: members.len(),
            items: page.slice(&members).iter().map(|s| s.to_string()).collect(),
        })
    })())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchParams {
    pub q: Option<String>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchResult {
    pub image_id: String,
    pub score: f64,
    pub snippet: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchResponse {
    pub query: String,
    pub limit: usize,
    pub hits: Vec<SearchResult>,
}

/// The first words of a caption, cut at a word boundary.
pub fn snippet(text: &str) -> String {
    if text.chars().count() <= SNIPPET_CHARS {
        return text.to_string();
    }
    let cut: String = text.chars().take(SNIPPET_CHARS).collect();
    let cut = match cut.rfind(char::is_whitespace) {
        Some(i) if i > 0 => &cut[..i],
        _ => &cut,
    };
    format!("{}...", cut.trim_end())
}

pub(crate) async fn search(
    State(h): State<ServiceHandle>,
    q: Result<Query<SearchParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let snap = &served.snapshot;
    json(served.version, (|| {
        let p = params(q)?;
        let query = p.q.unwrap_or_default();
        if query.trim().is_empty() {
            return Err(ApiError::bad_param("q must not be empty"));
        }
        let limit = p.limit.unwrap_or(DEFAULT_SEARCH_LIMIT);
        if limit == 0 {
            return Err(ApiError::bad_param("limit must be at least 1"));
        }
        let hits = snap.search(&query, limit).map_err(|e| match e {
            CorpusError::EmptyQuery => ApiError::bad_param(e.to_string()),
            other => ApiError::internal(other.to_string()),
        })?;
        Ok(SearchResponse {
            query,
            limit,
            hits: hits
                .into_iter()
                .map(|hit| SearchResult {
                    snippet: snap.caption(&hit.image_id).map(|c| snippet(&c.text)).unwrap_or_default(),
                    image_id: hit.image_id,
                    score: hit.score,
                })
                .collect(),
        })
    })())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ProjectedPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub cluster: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ProjectionResponse {
    pub explained_variance: [f64; 2],
    pub total_variance: f64,
    pub points: Vec<ProjectedPoint>,
}

pub(crate) async fn projection(
    State(h): State<ServiceHandle>,
    q: Result<Query<NoParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let snap = &served.snapshot;
    json(served.version, (|| {
        params(q)?;
        let p = snap
            .projection()
            .ok_or_else(|| ApiError::artifact_missing("no projection in this snapshot"))?;
        let clusters = snap.clusters().map(|c| c.assignment_map());
        Ok(ProjectionResponse {
            explained_variance: p.explained_variance,
            total_variance: p.total_variance,
            points: p
                .ids
                .iter()
                .zip(&p.coords)
                .map(|(id, xy)| ProjectedPoint {
                    id: id.clone(),
                    x: xy[0],
                    y: xy[1],
                    cluster: clusters.as_ref().and_then(|m| m.get(id.as_str()).copied()),
                })
                .collect(),
        })
    })())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct StatsResponse {
    pub version: u64,
    pub images: usize,
    pub status_counts: BTreeMap<String, usize>,
    /// Vectors per embedding space.
    pub spaces: BTreeMap<String, usize>,
    /// Absent when fewer than two captions exist.
    pub captions: Option<CaptionStats>,
    pub symmetry: Vec<SymmetryReport>,
    pub overlap: Vec<OverlapReport>,
}

pub(crate) async fn stats(
    State(h): State<ServiceHandle>,
    q: Result<Query<NoParams>, QueryRejection>,
) -> Response {
    let served = h.current();
    let snap = &served.snapshot;
    json(served.version, (|| {
        params(q)?;
        let cfg = &h.state.config;
        Ok(StatsResponse {
            version: served.version,
            images: snap.len(),
            status_counts: snap
                .status_counts()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            spaces: snap
                .space_names()
                .map(|n| (n.to_string(), snap.space(n).map_or(0, |s| s.len())))
                .collect(),
            captions: snap.caption_stats(&cfg.hedges, cfg.token_cap).ok(),
            symmetry: snap.reports().symmetry.clone(),
            overlap: snap.reports().overlap.clone(),
        })
    })())
}

pub(crate) async fn fallback() -> Response {
    error_response(ApiError::not_found("no such endpoint"))
}
