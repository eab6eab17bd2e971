use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use sparsepose::features::{synthesize_trackers, TrackerFrame};
use sparsepose::motion::Skeleton;
use sparsepose::net::{NetDims, NetworkParams};
use sparsepose::runtime::{
    replay, serve, Calibration, Client, ProtocolError, Request, Response, RuntimeError, SessionConfig, Status,
    StreamSession,
};
use sparsepose::synth::{locomotion_clip, LocomotionParams};

fn new_session() -> Result<StreamSession, RuntimeError> {
    let params = Arc::new(NetworkParams::init(NetDims { hidden: 24, latent: 8 }, 11));
    StreamSession::new(params, Arc::new(Skeleton::standard()), Calibration::default(), SessionConfig::default())
}

fn walk(n: usize) -> Vec<TrackerFrame> {
    synthesize_trackers(&locomotion_clip(&LocomotionParams {
        frames: n,
        ..Default::default()
    }))
    .unwrap()
}

fn start(connections: usize) -> (String, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let h = thread::spawn(move || serve(listener, new_session, Some(connections)).unwrap());
    (addr, h)
}

#[test]
fn round_trip_echoes_frame_id() {
    let (addr, h) = start(1);
    let mut c = Client::connect(&addr).unwrap();
    let frames = walk(50);
    for (i, f) in frames.iter().enumerate() {
        let id = 1000 + i as u32;
        let r = c.request(id, f).unwrap();
        assert_eq!(r.id, id);
        let want = if i < 45 { Status::WarmUp } else { Status::Ok };
        assert_eq!(r.status, want);
        assert_eq!(r.pose.len() + r.contact_probabilities.len(), 52);
    }
    drop(c);
    h.join().unwrap();
}

#[test]
fn socket_matches_offline_replay_bit_for_bit() {
    let frames = walk(90);
    let offline = replay(&frames, &mut new_session().unwrap()).unwrap();
    let (addr, h) = start(1);
    let mut c = Client::connect(&addr).unwrap();
    let online: Vec<Response> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| c.request(i as u32, f).unwrap())
        .filter(|r| r.status != Status::WarmUp)
        .collect();
    drop(c);
    h.join().unwrap();
    assert_eq!(online.len(), offline.len());
    for (a, b) in online.iter().zip(&offline) {
        assert_eq!(a.id as usize, b.frame);
        let pose: Vec<u32> = b.pose.iter().map(|v| (*v as f32).to_bits()).collect();
        assert_eq!(a.pose.map(f32::to_bits).to_vec(), pose);
        assert_eq!(a.contact_probabilities, b.contact_probabilities.map(|v| v as f32));
        assert_eq!(a.contacts, b.contacts);
    }
}

#[test]
fn bad_magic_gets_error_frame_then_close() {
    let (addr, h) = start(1);
    let mut c = Client::connect(&addr).unwrap();
    let mut bytes = Request::from_frame(1, &walk(2)[0]).encode();
    bytes[..4].copy_from_slice(b"NOPE");
    c.send_raw(&bytes).unwrap();
    match c.receive() {
        Err(RuntimeError::Protocol(ProtocolError::Remote(m))) => assert!(m.contains("magic"), "{m}"),
        other => panic!("{other:?}"),
    }
    // server closed its end
    assert!(matches!(c.receive(), Err(RuntimeError::Protocol(ProtocolError::ShortRead { got: 0, .. }))));
    h.join().unwrap();
}

#[test]
fn truncated_client_does_not_stop_the_service() {
    let (addr, h) = start(2);
    {
        let mut s = TcpStream::connect(&addr).unwrap();
        let bytes = Request::from_frame(1, &walk(2)[0]).encode();
        s.write_all(&bytes[..60]).unwrap();
    }
    let mut c = Client::connect(&addr).unwrap();
    let r = c.request(5, &walk(2)[0]).unwrap();
    assert_eq!((r.id, r.status), (5, Status::WarmUp));
    drop(c);
    h.join().unwrap();
}

#[test]
fn invalid_values_are_held() {
    let (addr, h) = start(1);
    let mut c = Client::connect(&addr).unwrap();
    let frames = walk(48);
    let mut last = None;
    for (i, f) in frames.iter().enumerate() {
        last = Some(c.request(i as u32, f).unwrap());
    }
    let mut bad = Request::from_frame(99, &frames[47]);
    bad.values[4] = f32::NAN;
    c.send_raw(&bad.encode()).unwrap();
    let r = c.receive().unwrap();
    assert_eq!(r.status, Status::Held);
    assert_eq!(r.pose, last.unwrap().pose);
    drop(c);
    h.join().unwrap();
}
