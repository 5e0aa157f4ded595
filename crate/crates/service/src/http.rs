//! HTTP API under `/api/v1`.

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::HashMap;
use std::sync::Arc;

use aquagreen_core::telemetry::{CommandAction, TelemetryRecord};

use crate::alerts;
use crate::auth::{verify_password, Claims, Role};
use crate::commands::CommandError;
use crate::store::{anchored, IngestOutcome, ReadingQuery, DEFAULT_QUERY_LIMIT, MAX_QUERY_LIMIT};
use crate::AppState;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            path: None,
        }
    }

    fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: Some(path.into()),
            ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", message)
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(p) = self.path {
            body["path"] = json!(p);
        }
        let mut resp = (self.status, Json(body)).into_response();
        if self.status == StatusCode::UNAUTHORIZED {
            resp.headers_mut()
                .insert(header::WWW_AUTHENTICATE, "Bearer".parse().expect("static header"));
        }
        resp
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/auth/login", post(login))
        .route("/api/v1/ingest", post(ingest))
        .route("/api/v1/readings", get(readings))
        .route("/api/v1/series", get(series))
        .route("/api/v1/nodes", get(nodes))
        .route("/api/v1/commands", post(issue_command).get(list_commands))
        .route("/api/v1/commands/pending", get(pending_commands))
        .route("/api/v1/commands/{id}/ack", post(ack_command))
        .route("/api/v1/alerts", get(active_alerts))
        .with_state(state)
}

fn authorize(state: &AppState, headers: &HeaderMap, roles: &[Role]) -> ApiResult<Claims> {
    let value = headers
        .get(header::AUTHORIZATION)
        .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?
        .to_str()
        .map_err(|_| ApiError::unauthorized("malformed authorization header"))?;
    let token = value
        .strip_prefix("Bearer ")
        .ok_or_else(|| ApiError::unauthorized("expected a bearer token"))?;
    let claims = state
        .signer
        .verify(token.trim(), state.clock.now_s())
        .map_err(|e| ApiError::unauthorized(e.to_string()))?;
    if !roles.contains(&claims.role) {
        return Err(ApiError::forbidden(format!("role {:?} may not call this endpoint", claims.role)));
    }
    Ok(claims)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { path };
        ApiError::unprocessable(path, e.into_inner().to_string())
    })
}

fn param<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>> {
    match q.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("query parameter '{key}' is invalid: {v:?}"))),
    }
}

#[derive(Deserialize)]
struct LoginRequest {
    username: String,
    password: String,
}

#[derive(Serialize)]
struct LoginResponse {
    token: String,
    role: Role,
    expires_at: u64,
}

async fn login(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<LoginResponse>> {
    let req: LoginRequest = parse_body(&body)?;
    let now = state.clock.now_s();
    {
        let mut throttle = state.throttle.lock().expect("throttle lock");
        if throttle.is_locked(&req.username, now) {
            return Err(ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                "too_many_attempts",
                "too many failed logins; retry in a minute",
            ));
        }
    }
    let user = state.credentials.find(&req.username);
    let ok = user.is_some_and(|u| verify_password(&req.password, &u.password_hash));
    let mut throttle = state.throttle.lock().expect("throttle lock");
    match (ok, user) {
        (true, Some(u)) => {
            throttle.clear(&req.username);
            let (token, claims) = state.signer.issue(&u.username, u.role, now, state.config.token_ttl_s);
            Ok(Json(LoginResponse {
                token,
                role: claims.role,
                expires_at: claims.exp,
            }))
        }
        _ => {
            throttle.record_failure(&req.username, now);
            Err(ApiError::unauthorized("invalid username or password"))
        }
    }
}

async fn ingest(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let claims = authorize(&state, &headers, &[Role::Gateway])?;
    let record: TelemetryRecord = parse_body(&body)?;
    record
        .validate()
        .map_err(|e| ApiError::unprocessable(e.path, e.message))?;
    if record.gateway_id != claims.sub {
        return Err(ApiError::forbidden(format!(
            "token for '{}' cannot ingest as gateway '{}'",
            claims.sub, record.gateway_id
        )));
    }
    let tank = state.config.node_tanks.get(&record.node_id).cloned();
    let n = record.readings.len();
    let outcome = state
        .store
        .write()
        .expect("store lock")
        .ingest(record, tank, state.clock.now_s())
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(match outcome {
        IngestOutcome::Created(id) => (
            StatusCode::CREATED,
            Json(json!({ "id": id, "status": "created", "readings": n })),
        )
            .into_response(),
        IngestOutcome::Duplicate(id) => (
            StatusCode::OK,
            Json(json!({ "id": id, "status": "duplicate", "readings": 0 })),
        )
            .into_response(),
    })
}

async fn readings(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    authorize(&state, &headers, &[Role::Operator, Role::Gateway])?;
    let pattern = match q.get("pattern") {
        Some(p) => Some(anchored(p).map_err(|e| ApiError::bad_request(format!("invalid pattern: {e}")))?),
        None => None,
    };
    let limit = param::<usize>(&q, "limit")?.unwrap_or(DEFAULT_QUERY_LIMIT);
    if limit == 0 || limit > MAX_QUERY_LIMIT {
        return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_QUERY_LIMIT}")));
    }
    let query = ReadingQuery {
        pattern,
        node_id: param(&q, "node")?,
        from_s: param(&q, "from")?,
        to_s: param(&q, "to")?,
        limit,
    };
    let rows = state.store.read().expect("store lock").query(&query);
    Ok(Json(json!({ "count": rows.len(), "readings": rows })).into_response())
}

async fn series(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    authorize(&state, &headers, &[Role::Operator, Role::Gateway])?;
    let s = state.store.read().expect("store lock").series();
    Ok(Json(s).into_response())
}

async fn nodes(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    authorize(&state, &headers, &[Role::Operator, Role::Gateway])?;
    let n = state.store.read().expect("store lock").nodes();
    Ok(Json(n).into_response())
}

#[derive(Deserialize)]
struct IssueRequest {
    #[serde(default)]
    gateway_id: Option<String>,
    tank_id: String,
    #[serde(flatten)]
    action: CommandAction,
}

async fn issue_command(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let claims = authorize(&state, &headers, &[Role::Operator])?;
    let req: IssueRequest = parse_body(&body)?;
    if let CommandAction::SetIntervalS { interval_s } = req.action {
        if !(interval_s > 0.0 && interval_s.is_finite()) {
            return Err(ApiError::unprocessable("interval_s", "must be a positive number of seconds"));
        }
    }
    if req.tank_id.is_empty() {
        return Err(ApiError::unprocessable("tank_id", "must not be empty"));
    }
    if !state.config.tanks.is_empty() && !state.config.tanks.contains(&req.tank_id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_tank",
            format!("unknown tank '{}'", req.tank_id),
        ));
    }
    let gateway = req
        .gateway_id
        .unwrap_or_else(|| state.config.default_gateway_id.clone());
    let cmd = state.commands.lock().expect("commands lock").issue(
        &gateway,
        &req.tank_id,
        req.action,
        &claims.sub,
        state.clock.now_s(),
    );
    Ok((StatusCode::CREATED, Json(cmd)).into_response())
}

async fn list_commands(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Response> {
    authorize(&state, &headers, &[Role::Operator, Role::Gateway])?;
    let all: Vec<_> = state
        .commands
        .lock()
        .expect("commands lock")
        .all()
        .cloned()
        .collect();
    Ok(Json(all).into_response())
}

fn gateway_param(claims: &Claims, q: &HashMap<String, String>) -> ApiResult<String> {
    let gw = q
        .get("gateway")
        .cloned()
        .ok_or_else(|| ApiError::bad_request("query parameter 'gateway' is required"))?;
    if gw != claims.sub {
        return Err(ApiError::forbidden(format!("token for '{}' cannot act as '{gw}'", claims.sub)));
    }
    Ok(gw)
}

async fn pending_commands(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let claims = authorize(&state, &headers, &[Role::Gateway])?;
    let gw = gateway_param(&claims, &q)?;
    let cmds = state
        .commands
        .lock()
        .expect("commands lock")
        .fetch_pending(&gw, state.clock.now_s());
    Ok(Json(cmds).into_response())
}

async fn ack_command(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let claims = authorize(&state, &headers, &[Role::Gateway])?;
    let id: u64 = id
        .parse()
        .map_err(|_| ApiError::bad_request(format!("command id must be an integer, got {id:?}")))?;
    let result = state
        .commands
        .lock()
        .expect("commands lock")
        .ack(id, &claims.sub, state.clock.now_s());
    match result {
        Ok(cmd) => Ok(Json(cmd).into_response()),
        Err(e @ CommandError::NotFound(_)) => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string())),
        Err(e @ CommandError::IllegalTransition { .. }) => {
            Err(ApiError::new(StatusCode::CONFLICT, "illegal_transition", e.to_string()))
        }
        Err(e @ CommandError::WrongGateway { .. }) => Err(ApiError::forbidden(e.to_string())),
    }
}

async fn active_alerts(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    authorize(&state, &headers, &[Role::Operator, Role::Gateway])?;
    let now = param::<u64>(&q, "now")?.unwrap_or_else(|| state.clock.now_s());
    let store = state.store.read().expect("store lock");
    let active = alerts::evaluate(&state.rules, store.rows(), now);
    Ok(Json(json!({ "now": now, "alerts": active })).into_response())
}
