//! HTTP/1.1 transport: a blocking JSON server around any gateway
//! implementation, and a matching client.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use tiny_http::{Header, Method, Response, Server};

use super::*;

pub const PATHS: [&str; 6] = ["/plan", "/guideline", "/visual_prompt", "/verify", "/policy/step", "/policy/reset"];

pub trait Backend: ModelGateway + PolicyGateway {}
impl<T: ModelGateway + PolicyGateway> Backend for T {}

fn decode<T: DeserializeOwned>(body: &[u8]) -> Result<T, GatewayError> {
    serde_json::from_slice(body).map_err(|e| GatewayError::BadRequest(format!("invalid envelope: {e}")))
}

fn encode<T: Serialize>(v: Result<T, GatewayError>) -> (u16, Vec<u8>) {
    match v {
        Ok(v) => (200, serde_json::to_vec(&v).expect("envelope serializes")),
        Err(e) => (e.status(), serde_json::to_vec(&json!({"error": e.code(), "message": e.to_string()})).unwrap()),
    }
}

/// Routes one request body to the backend; returns status and JSON body.
pub fn dispatch(backend: &dyn Backend, path: &str, body: &[u8]) -> (u16, Vec<u8>) {
    match path {
        "/plan" => encode(decode(body).and_then(|r| backend.plan(&r))),
        "/guideline" => encode(decode(body).and_then(|r| backend.guideline(&r))),
        "/visual_prompt" => encode(decode(body).and_then(|r| backend.visual_prompt(&r))),
        "/verify" => encode(decode(body).and_then(|r| backend.verify(&r))),
        "/policy/step" => encode(decode(body).and_then(|r| backend.policy_step(&r))),
        "/policy/reset" => encode(decode(body).and_then(|r| backend.policy_reset(&r))),
        _ => (
            404,
            serde_json::to_vec(&json!({"error": "not_found", "message": format!("no endpoint {path}")})).unwrap(),
        ),
    }
}

/// A running server; dropping it (or calling `shutdown`) stops the listener.
pub struct MockServer {
    server: Arc<Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(bind: &str, backend: Arc<dyn Backend>) -> std::io::Result<MockServer> {
        let server = Arc::new(Server::http(bind).map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::Other, "not an IP listener"))?;
        let srv = server.clone();
        let worker = std::thread::spawn(move || {
            for mut request in srv.incoming_requests() {
                let mut body = Vec::new();
                let (status, out) = if *request.method() != Method::Post {
                    (
                        405,
                        serde_json::to_vec(&json!({"error": "method_not_allowed", "message": "use POST"})).unwrap(),
                    )
                } else if let Err(e) = request.as_reader().read_to_end(&mut body) {
                    (400, serde_json::to_vec(&json!({"error": "bad_request", "message": e.to_string()})).unwrap())
                } else {
                    let path = request.url().split('?').next().unwrap_or("").to_string();
                    dispatch(backend.as_ref(), &path, &body)
                };
                let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = request.respond(Response::from_data(out).with_status_code(status).with_header(header));
            }
        });
        Ok(MockServer {
            server,
            addr,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the listener stops.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Client for a remote gateway; cheap to clone and share across threads.
#[derive(Clone)]
pub struct HttpGateway {
    base: String,
    agent: ureq::Agent,
}

impl HttpGateway {
    pub fn new(base: &str) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build();
        HttpGateway {
            base: base.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn post<Q: Serialize, R: DeserializeOwned>(&self, path: &str, req: &Q) -> Result<R, GatewayError> {
        let url = format!("{}{}", self.base, path);
        match self.agent.post(&url).send_json(req) {
            Ok(resp) => resp
                .into_json::<R>()
                .map_err(|e| GatewayError::BadResponseShape(format!("{path}: {e}"))),
            Err(ureq::Error::Status(_, resp)) => {
                let v: serde_json::Value = resp
                    .into_json()
                    .map_err(|e| GatewayError::BadResponseShape(format!("{path}: error body: {e}")))?;
                let code = v["error"].as_str().unwrap_or("unknown").to_string();
                let message = v["message"].as_str().unwrap_or("").to_string();
                Err(GatewayError::from_code(&code, message))
            }
            Err(e) => Err(GatewayError::Transport(e.to_string())),
        }
    }
}

impl ModelGateway for HttpGateway {
    fn plan(&self, req: &PlanRequest) -> Result<PlanResponse, GatewayError> {
        self.post("/plan", req)
    }
    fn guideline(&self, req: &StepRequest) -> Result<GuidelineResponse, GatewayError> {
        self.post("/guideline", req)
    }
    fn visual_prompt(&self, req: &StepRequest) -> Result<VisualPromptResponse, GatewayError> {
        self.post("/visual_prompt", req)
    }
    fn verify(&self, req: &StepRequest) -> Result<VerifyResponse, GatewayError> {
        self.post("/verify", req)
    }
}

impl PolicyGateway for HttpGateway {
    fn policy_reset(&self, req: &PolicyResetRequest) -> Result<PolicyResetResponse, GatewayError> {
        self.post("/policy/reset", req)
    }
    fn policy_step(&self, req: &PolicyStepRequest) -> Result<PolicyStepResponse, GatewayError> {
        self.post("/policy/step", req)
    }
}
