//! Serves any [`Backend`] over the wire contract.
//!
//! Used as the conformance stub in tests and examples, and to put the mock
//! backends behind a real socket.

use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use socket2::{Domain, Protocol, Socket, Type};
use tiny_http::{Header, Method, Request, Response, Server};

use super::wire::{AnswerBody, EmbedBody, ErrorBody, ExplainBody};
use super::{AnswerRequest, Backend, EmbedRequest, ExplainRequest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Sleep injected before every response.
    pub delay: Duration,
    /// Answer the first `n` requests with 503 (exercises client retries).
    pub fail_first: usize,
    pub workers: usize,
}

pub struct ServerHandle {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
    requests: Arc<AtomicUsize>,
}

impl ServerHandle {
    pub fn url(&self) -> url::Url {
        url::Url::parse(&format!("http://{}/", self.addr)).expect("socket address is a valid url")
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Requests received so far, including failed ones.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves until the
/// handle is dropped.
pub fn serve<B: Backend + 'static>(backend: B, addr: &str, opts: ServeOptions) -> Result<ServerHandle> {
    let server = Server::from_listener(listener(addr)?, None)
        .map_err(|e| Error::BackendUnavailable(format!("cannot serve on {addr}: {e}")))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Config("server is not bound to an IP socket".into()))?;
    let server = Arc::new(server);
    let backend = Arc::new(backend);
    let requests = Arc::new(AtomicUsize::new(0));
    let workers = (0..opts.workers.max(1))
        .map(|_| {
            let (server, backend, requests, opts) =
                (server.clone(), backend.clone(), requests.clone(), opts.clone());
            thread::spawn(move || {
                while let Ok(mut req) = server.recv() {
                    let n = requests.fetch_add(1, Ordering::SeqCst);
                    if !opts.delay.is_zero() {
                        thread::sleep(opts.delay);
                    }
                    let mut body = String::new();
                    let (status, out) = if n < opts.fail_first {
                        error_body(503, "injected failure")
                    } else if let Err(e) = req.as_reader().read_to_string(&mut body) {
                        error_body(400, &format!("unreadable body: {e}"))
                    } else {
                        handle(&*backend, req.method(), req.url(), &body)
                    };
                    respond(req, status, out);
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        server,
        addr,
        workers,
        requests,
    })
}

/// Binds with TCP_NODELAY, which accepted connections inherit. Without it a
/// response larger than the server's write buffer leaves in two segments and
/// the second waits out the client's delayed ACK (~40 ms per call).
fn listener(addr: &str) -> Result<std::net::TcpListener> {
    let unavailable = |e: std::io::Error| Error::BackendUnavailable(format!("cannot bind {addr}: {e}"));
    let sock_addr = addr
        .to_socket_addrs()
        .map_err(unavailable)?
        .next()
        .ok_or_else(|| Error::Config(format!("{addr} resolves to no address")))?;
    let socket = Socket::new(Domain::for_address(sock_addr), Type::STREAM, Some(Protocol::TCP)).map_err(unavailable)?;
    socket.set_reuse_address(true).map_err(unavailable)?;
    socket.set_tcp_nodelay(true).map_err(unavailable)?;
    socket.bind(&sock_addr.into()).map_err(unavailable)?;
    socket.listen(128).map_err(unavailable)?;
    Ok(socket.into())
}

fn respond(req: Request, status: u16, body: String) {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let _ = req.respond(
        Response::from_string(body)
            .with_status_code(status)
            .with_header(header),
    );
}

fn error_body(status: u16, msg: &str) -> (u16, String) {
    let body = serde_json::to_string(&ErrorBody { error: msg.into() }).expect("serializable");
    (status, body)
}

fn status_for(err: &Error) -> u16 {
    match err {
        Error::Precondition(_) | Error::Protocol(_) | Error::Config(_) | Error::Json(_) => 400,
        _ => 500,
    }
}

fn reply<T: serde::Serialize>(result: Result<T>) -> (u16, String) {
    match result.and_then(|v| Ok(serde_json::to_string(&v)?)) {
        Ok(body) => (200, body),
        Err(e) => error_body(status_for(&e), &e.to_string()),
    }
}

fn parse<T: serde::de::DeserializeOwned>(body: &str) -> Result<T> {
    serde_json::from_str(body).map_err(|e| Error::Protocol(format!("bad request body: {e}")))
}

fn handle(backend: &dyn Backend, method: &Method, path: &str, body: &str) -> (u16, String) {
    if *method != Method::Post {
        return error_body(405, "only POST is supported");
    }
    match path.trim_end_matches('/') {
        "/v1/explain" => reply(parse::<ExplainRequest>(body).and_then(|r| {
            backend.explain(&r).map(|resp| ExplainBody {
                explanation: resp.explanation,
            })
        })),
        "/v1/answer" => reply(parse::<AnswerRequest>(body).and_then(|r| {
            backend
                .answer(&r)
                .map(|resp| AnswerBody { answer: resp.answer })
        })),
        "/v1/embed" => reply(parse::<EmbedRequest>(body).and_then(|r| {
            backend.embed(&r).map(|resp| EmbedBody {
                vectors: resp
                    .vectors
                    .into_iter()
                    .map(|(id, v)| (id, v.into()))
                    .collect(),
            })
        })),
        other => error_body(404, &format!("no endpoint {other}")),
    }
}
