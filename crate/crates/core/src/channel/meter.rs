use std::collections::BTreeMap;

use super::wire::MsgType;

/// Framed byte counts per direction, including prefixes and signatures.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommMeter {
    pub bytes_sent: u64,
    pub bytes_recv: u64,
    pub frames_sent: u64,
    pub frames_recv: u64,
    pub sent_by_type: BTreeMap<MsgType, u64>,
    pub recv_by_type: BTreeMap<MsgType, u64>,
    mark_sent: u64,
    mark_recv: u64,
}

impl CommMeter {
    pub fn record_sent(&mut self, ty: MsgType, bytes: usize) {
        self.bytes_sent += bytes as u64;
        self.frames_sent += 1;
        *self.sent_by_type.entry(ty).or_default() += bytes as u64;
    }

    pub fn record_recv(&mut self, ty: MsgType, bytes: usize) {
        self.bytes_recv += bytes as u64;
        self.frames_recv += 1;
        *self.recv_by_type.entry(ty).or_default() += bytes as u64;
    }

    /// `(sent, received)` since the previous call.
    pub fn take_epoch(&mut self) -> (u64, u64) {
        let d = (self.bytes_sent - self.mark_sent, self.bytes_recv - self.mark_recv);
        self.mark_sent = self.bytes_sent;
        self.mark_recv = self.bytes_recv;
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_are_monotone() {
        let mut m = CommMeter::default();
        assert_eq!((m.bytes_sent, m.bytes_recv), (0, 0));
        m.record_sent(MsgType::TrainAm, 100);
        m.record_recv(MsgType::TrainOut, 40);
        assert_eq!(m.take_epoch(), (100, 40));
        m.record_sent(MsgType::TrainAm, 10);
        assert_eq!(m.take_epoch(), (10, 0));
        assert_eq!(m.bytes_sent, 110);
        assert_eq!(m.sent_by_type[&MsgType::TrainAm], 110);
    }
}
