use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};

use super::{check_size, Endpoint, Transport, TransportError};

/// Non-blocking UDP socket.
#[derive(Debug)]
pub struct UdpTransport {
    socket: UdpSocket,
    local: Endpoint,
    buf: Vec<u8>,
}

impl UdpTransport {
    /// Binds `address` (`host:port`; port 0 picks a free one).
    pub fn bind(address: &str) -> Result<Self, TransportError> {
        let socket = UdpSocket::bind(address)?;
        socket.set_nonblocking(true)?;
        let local = Endpoint(socket.local_addr()?.to_string());
        Ok(Self {
            socket,
            local,
            buf: vec![0; 65_536],
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    fn resolve(to: &Endpoint) -> Result<SocketAddr, TransportError> {
        to.0.to_socket_addrs()
            .ok()
            .and_then(|mut addrs| addrs.next())
            .ok_or_else(|| TransportError::Unroutable(to.clone()))
    }
}

impl Transport for UdpTransport {
    fn local(&self) -> &Endpoint {
        &self.local
    }

    fn send(&mut self, to: &Endpoint, payload: &[u8]) -> Result<(), TransportError> {
        check_size(payload)?;
        let addr = Self::resolve(to)?;
        match self.socket.send_to(payload, addr) {
            Ok(_) => Ok(()),
            // A full buffer is a drop, which best-effort delivery allows.
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                log::debug!("udp send buffer full; dropped datagram to {to}");
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn poll_receive(&mut self) -> Result<Option<(Vec<u8>, Endpoint)>, TransportError> {
        loop {
            match self.socket.recv_from(&mut self.buf) {
                Ok((n, from)) => return Ok(Some((self.buf[..n].to_vec(), Endpoint(from.to_string())))),
                Err(e) if e.kind() == ErrorKind::WouldBlock => return Ok(None),
                // ICMP errors from earlier sends surface here on some
                // platforms; they are not our datagram.
                Err(e) if e.kind() == ErrorKind::ConnectionReset => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}
