"""Packet-length credential codec.

Wi-Fi credentials plus a provisioning token ride exclusively in UDP
datagram *lengths*: a receiver that can observe frame sizes (but no
payload bytes) recovers the SSID, passphrase and token.  The length
space is split into disjoint bands so a streaming decoder can classify
every frame on its own:

    guide   1..10       sync pattern, values 1/3/6/10 only
    som     18..65      start-of-message, values 18/35/60/65 only
    idx     100..355    payload byte index   (IDX_BASE + i)
    val     400..655    payload byte value   (VAL_BASE + b)
    len     700..955    payload byte count   (LEN_BASE + n)
    crc     1000..1255  crc-8 of the payload (CRC_BASE + crc)

One broadcast round is::

    [1,3,6,10] * GUIDE_REPS, [18,35,60,65], LEN, (IDX_i, VAL_i)*, CRC

and the whole round is repeated so a lossy receiver can accumulate
(index, value) votes across rounds.  The full framing contract lives in
docs/wire-format.md.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

GUIDE = (1, 3, 6, 10)
SOM = (18, 35, 60, 65)
GUIDE_REPS = 8
IDX_BASE = 100
VAL_BASE = 400
LEN_BASE = 700
CRC_BASE = 1000
BAND_WIDTH = 256

PROVISION_PORT = 30011
FILLER_BYTE = 0x55
PAYLOAD_VERSION = 0x01

MAX_SSID_BYTES = 32
MAX_PSK_BYTES = 64
TOKEN_CHARS = 32
MAX_PAYLOAD = 255
MAX_ROUNDS = 16
DEFAULT_ROUNDS = 5

_GUIDE_INDEX = {v: i for i, v in enumerate(GUIDE)}
_SOM_INDEX = {v: i for i, v in enumerate(SOM)}


class CodecError(ValueError):
    """Base class for framing and codec errors."""


class FieldTooLong(CodecError):
    pass


class BadTokenLength(CodecError):
    pass


class BadVersion(CodecError):
    pass


class TruncatedPayload(CodecError):
    pass


class PayloadTooLong(CodecError):
    pass


def crc8(data: bytes) -> int:
    """CRC-8, polynomial 0x07, init 0x00, no reflection, no final xor."""
    crc = 0
    for byte in data:
        crc ^= byte
        for _ in range(8):
            if crc & 0x80:
                crc = ((crc << 1) ^ 0x07) & 0xFF
            else:
                crc = (crc << 1) & 0xFF
    return crc


@dataclass
class Credentials:
    """SSID, passphrase and provisioning token destined for one device.

    ``token`` is normally exactly 32 characters; the constructor does not
    enforce that so a decoder can surface malformed tokens to the device,
    which applies its own (length-only) check.  The strict shape is
    enforced on the encode path by :func:`build_payload`.
    """

    ssid: str
    passphrase: str
    token: str

    def validate(self) -> None:
        ssid_b = self.ssid.encode("utf-8")
        if not ssid_b:
            raise CodecError("ssid must be nonempty")
        if len(ssid_b) > MAX_SSID_BYTES:
            raise FieldTooLong(f"ssid exceeds {MAX_SSID_BYTES} bytes")
        if len(self.passphrase.encode("utf-8")) > MAX_PSK_BYTES:
            raise FieldTooLong(f"passphrase exceeds {MAX_PSK_BYTES} bytes")
        token_b = self.token.encode("utf-8")
        if len(self.token) != TOKEN_CHARS or len(token_b) != TOKEN_CHARS:
            raise BadTokenLength(
                f"token must be exactly {TOKEN_CHARS} ascii characters"
            )


@dataclass
class DplSequence:
    """Datagram lengths for a credentials broadcast, one list per round."""

    rounds: list[list[int]]

    def flatten(self) -> list[int]:
        out: list[int] = []
        for r in self.rounds:
            out.extend(r)
        return out


def frame_fields(ssid: str, passphrase: str, token: str) -> bytes:
    """Length-prefix ssid/passphrase and append the token verbatim.

    No token-length check: this is the raw framing used both by
    :func:`build_payload` and by directly crafted (malformed) payloads.
    """
    ssid_b = ssid.encode("utf-8")
    psk_b = passphrase.encode("utf-8")
    if not ssid_b:
        raise CodecError("ssid must be nonempty")
    if len(ssid_b) > MAX_SSID_BYTES:
        raise FieldTooLong(f"ssid exceeds {MAX_SSID_BYTES} bytes")
    if len(psk_b) > MAX_PSK_BYTES:
        raise FieldTooLong(f"passphrase exceeds {MAX_PSK_BYTES} bytes")
    return bytes(
        [PAYLOAD_VERSION, len(ssid_b)]
    ) + ssid_b + bytes([len(psk_b)]) + psk_b + token.encode("utf-8")


def build_payload(creds: Credentials) -> bytes:
    """[version][len_ssid][ssid][len_psk][psk][token:32], at most 131 bytes."""
    creds.validate()
    return frame_fields(creds.ssid, creds.passphrase, creds.token)


def parse_payload(data: bytes) -> Credentials:
    """Exact inverse of :func:`build_payload` (token must be 32 bytes)."""
    creds, trailing = _parse_frame(data)
    if trailing != TOKEN_CHARS:
        raise BadTokenLength(f"token field is {trailing} bytes, expected {TOKEN_CHARS}")
    return creds


def parse_payload_lax(data: bytes) -> Credentials:
    """Parse a credentials payload accepting any token length.

    Devices use this so that a malformed (wrong-length) token is still
    surfaced and can be rejected by the device-side length check instead
    of silently vanishing inside the decoder.
    """
    creds, _ = _parse_frame(data)
    return creds


def _parse_frame(data: bytes) -> tuple[Credentials, int]:
    if len(data) < 2:
        raise TruncatedPayload("payload shorter than header")
    if data[0] != PAYLOAD_VERSION:
        raise BadVersion(f"unknown payload version {data[0]:#04x}")
    pos = 1
    ssid_len = data[pos]
    pos += 1
    if ssid_len == 0:
        raise CodecError("ssid must be nonempty")
    if ssid_len > MAX_SSID_BYTES or pos + ssid_len + 1 > len(data):
        raise TruncatedPayload("ssid field runs past end of payload")
    ssid_b = data[pos : pos + ssid_len]
    pos += ssid_len
    psk_len = data[pos]
    pos += 1
    if psk_len > MAX_PSK_BYTES or pos + psk_len > len(data):
        raise TruncatedPayload("passphrase field runs past end of payload")
    psk_b = data[pos : pos + psk_len]
    pos += psk_len
    token_b = data[pos:]
    try:
        creds = Credentials(
            ssid=ssid_b.decode("utf-8"),
            passphrase=psk_b.decode("utf-8"),
            token=token_b.decode("utf-8"),
        )
    except UnicodeDecodeError as exc:
        raise CodecError(f"payload text is not valid utf-8: {exc}") from exc
    return creds, len(token_b)


def encode(creds: Credentials, rounds: int = DEFAULT_ROUNDS) -> DplSequence:
    """Encode validated credentials into a datagram-length sequence."""
    return encode_payload(build_payload(creds), rounds)


def encode_payload(payload: bytes, rounds: int = DEFAULT_ROUNDS) -> DplSequence:
    """Encode an already-framed payload; used directly to craft
    nonconforming broadcasts (e.g. wrong-length tokens)."""
    if not 1 <= rounds <= MAX_ROUNDS:
        raise CodecError(f"rounds must be in [1, {MAX_ROUNDS}]")
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLong(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    if not payload:
        raise CodecError("payload must be nonempty")
    crc = crc8(payload)
    one_round = list(GUIDE) * GUIDE_REPS + list(SOM)
    one_round.append(LEN_BASE + len(payload))
    for i, b in enumerate(payload):
        one_round.append(IDX_BASE + i)
        one_round.append(VAL_BASE + b)
    one_round.append(CRC_BASE + crc)
    return DplSequence(rounds=[list(one_round) for _ in range(rounds)])


def round_datagram_count(payload_len: int) -> int:
    """Datagrams per round: 4*GUIDE_REPS + 4 + 1 + 2n + 1."""
    return 4 * GUIDE_REPS + len(SOM) + 1 + 2 * payload_len + 1


class Phase(Enum):
    HUNTING = "hunting"
    SYNCED = "synced"
    COLLECTING = "collecting"
    COMPLETE = "complete"
    FAILED = "failed"


def _classify(length: int) -> tuple[str, int | None]:
    if length in _GUIDE_INDEX:
        return "guide", _GUIDE_INDEX[length]
    if length in _SOM_INDEX:
        return "som", _SOM_INDEX[length]
    if IDX_BASE <= length < IDX_BASE + BAND_WIDTH:
        return "idx", length - IDX_BASE
    if VAL_BASE <= length < VAL_BASE + BAND_WIDTH:
        return "val", length - VAL_BASE
    if LEN_BASE <= length < LEN_BASE + BAND_WIDTH:
        return "len", length - LEN_BASE
    if CRC_BASE <= length < CRC_BASE + BAND_WIDTH:
        return "crc", length - CRC_BASE
    if 18 <= length <= 65:
        return "som_noise", None
    if 1 <= length <= 10:
        return "guide_noise", None
    return "gap", None


@dataclass
class DecoderState:
    """Streaming decoder over a sequence of observed datagram lengths.

    Loss handling is conservative: within one round, a run of value
    frames is assigned to payload slots only when it sits between two
    position anchors (explicit index frames, the round head, or the crc
    trailer) and its count exactly matches the slot span, which proves
    no frame in the run was lost.  Assignments vote into per-slot
    tallies across rounds, and the payload is accepted only when every
    slot is filled and the crc-8 trailer matches.  At end of stream,
    :meth:`finalize` additionally recovers a single still-missing byte
    by solving the crc equation.

    A length equal to the immediately preceding one is treated as a
    link-level duplicate and skipped; the encoder never emits two equal
    adjacent lengths, so this is lossless on real streams.
    """

    phase: Phase = Phase.HUNTING
    expected_len: int | None = None
    crc_seen: int | None = None
    slots: dict[int, dict[int, int]] = field(default_factory=dict)

    _guide_run: int = 0
    _som_pos: int = 0
    _prev_len: int | None = None
    _round_buf: list[tuple[str, int]] = field(default_factory=list)
    _head_known: bool = False
    _len_votes: dict[int, int] = field(default_factory=dict)
    _crc_votes: dict[int, int] = field(default_factory=dict)
    _filled: int = 0
    _dirty: bool = False
    payload: bytes | None = None
    credentials: Credentials | None = None

    # -- feeding ---------------------------------------------------------

    def feed(self, length: int) -> "DecoderState":
        if self.phase in (Phase.COMPLETE, Phase.FAILED):
            return self
        if length == self._prev_len:
            return self
        self._prev_len = length
        band, value = _classify(length)
        if band in ("gap", "guide_noise"):
            return self
        if self.phase is Phase.HUNTING:
            self._feed_hunting(band, value)
        elif self.phase is Phase.SYNCED:
            self._feed_synced(band, value)
        elif self.phase is Phase.COLLECTING:
            self._feed_collecting(band, value)
        return self

    def _feed_hunting(self, band: str, value: int | None) -> None:
        if band == "guide":
            pos = self._guide_run % len(GUIDE)
            if value >= pos:
                self._guide_run += value - pos + 1
            else:
                self._guide_run += len(GUIDE) - pos + value + 1
            if self._guide_run >= 2 * len(GUIDE):
                self.phase = Phase.SYNCED
                self._som_pos = 0
        else:
            # any other in-band frame breaks a consecutive guide run
            self._guide_run = 0

    def _feed_synced(self, band: str, value: int | None) -> None:
        if band == "som":
            if value >= self._som_pos:
                self._som_pos = value + 1
            if self._som_pos >= len(SOM):
                self.phase = Phase.COLLECTING
                self._head_known = True
        elif band in ("idx", "val", "len", "crc"):
            # whole start-of-message lost; the data bands are unambiguous.
            # Entering on a len frame still marks a round head; entering
            # mid-data does not, so pre-index values stay unplaceable.
            self.phase = Phase.COLLECTING
            self._head_known = band == "len"
            self._feed_collecting(band, value)

    def _feed_collecting(self, band: str, value: int | None) -> None:
        if band in ("guide", "som", "som_noise"):
            # separator between rounds: settle the buffered round
            self._flush_round()
            self._head_known = True
            return
        if band == "len":
            self._len_votes[value] = self._len_votes.get(value, 0) + 1
            self._refresh_expected_len()
        elif band == "crc":
            self._crc_votes[value] = self._crc_votes.get(value, 0) + 1
            self._refresh_crc_seen()
        self._round_buf.append((band, value))
        if band == "crc":
            # crc closes the round on the wire
            self._flush_round()
            self._head_known = True

    def _flush_round(self) -> None:
        """Settle one round's buffered frames via anchored alignment.

        The buffer is cut into segments of value frames delimited by
        position anchors.  A segment is assigned only when its value
        count equals the number of slots it must cover, which proves
        that no value frame inside it was dropped.
        """
        buf = self._round_buf
        self._round_buf = []
        if not buf:
            return
        round_n: int | None = None
        for band, value in buf:
            if band == "len":
                round_n = value
                break
        n = round_n if round_n is not None else self.expected_len

        seg_vals: list[int] = []
        seg_start: int | None = 0 if self._head_known else None
        for band, value in buf:
            if band == "val":
                seg_vals.append(value)
            elif band == "idx":
                self._close_segment(seg_start, seg_vals, value - 1)
                seg_vals = []
                seg_start = value
            elif band == "crc":
                if n is not None:
                    self._close_segment(seg_start, seg_vals, n - 1)
                seg_vals = []
                seg_start = None
            # len frames carry no position information beyond the head
        if seg_vals and seg_start is not None and n is not None:
            # tail segment closed by the known payload size
            self._close_segment(seg_start, seg_vals, n - 1)
        self._try_complete()

    def _close_segment(
        self, start: int | None, vals: list[int], end: int | None
    ) -> None:
        if start is None or end is None or not vals:
            return
        if end - start + 1 != len(vals):
            return
        if start < 0 or end >= BAND_WIDTH:
            return
        for offset, value in enumerate(vals):
            self._vote(start + offset, value)

    # -- candidate bookkeeping -------------------------------------------

    def _vote(self, slot: int, value: int) -> None:
        votes = self.slots.setdefault(slot, {})
        if not votes:
            if self.expected_len is None or slot < self.expected_len:
                self._filled += 1
            self._dirty = True
        old_major = self._majority(votes) if votes else None
        votes[value] = votes.get(value, 0) + 1
        if old_major is not None and self._majority(votes) != old_major:
            self._dirty = True

    @staticmethod
    def _majority(votes: dict[int, int]) -> int | None:
        if not votes:
            return None
        # highest count wins; ties break to the smallest value
        return min(votes, key=lambda v: (-votes[v], v))

    def _refresh_expected_len(self) -> None:
        new = self._majority(self._len_votes)
        if new != self.expected_len:
            self.expected_len = new
            self._filled = sum(1 for i in self.slots if i < new)
            self._dirty = True

    def _refresh_crc_seen(self) -> None:
        new = self._majority(self._crc_votes)
        if new != self.crc_seen:
            self.crc_seen = new
            self._dirty = True

    # -- completion -------------------------------------------------------

    def _assemble(self) -> bytes | None:
        n = self.expected_len
        if not n:
            return None
        out = bytearray(n)
        for i in range(n):
            votes = self.slots.get(i)
            if not votes:
                return None
            out[i] = self._majority(votes)
        return bytes(out)

    def _try_complete(self) -> None:
        if not self._dirty or self.expected_len is None or self.crc_seen is None:
            return
        self._dirty = False
        if self._filled < self.expected_len or self.expected_len == 0:
            return
        payload = self._assemble()
        if payload is None or crc8(payload) != self.crc_seen:
            return
        try:
            creds = parse_payload_lax(payload)
        except CodecError:
            return
        self.payload = payload
        self.credentials = creds
        self.phase = Phase.COMPLETE

    def finalize(self) -> "DecoderState":
        """End-of-stream settlement: flush the open round, then classify.

        A fully-filled slot set whose crc does not match is a hard
        failure.  If exactly one slot is still empty, the missing byte
        is recovered by solving the crc equation.
        """
        if self.phase is not Phase.COLLECTING:
            return self
        self._dirty = True
        self._flush_round()
        if self.phase is Phase.COMPLETE:
            return self
        n = self.expected_len
        if n is None or self.crc_seen is None or n == 0:
            return self
        missing = [i for i in range(n) if i not in self.slots]
        if not missing:
            self.phase = Phase.FAILED
            return self
        if len(missing) == 1:
            self._fill_one(missing[0])
        return self

    def _fill_one(self, hole: int) -> None:
        n = self.expected_len
        out = bytearray(n)
        for i in range(n):
            if i == hole:
                continue
            out[i] = self._majority(self.slots[i])
        for cand in range(256):
            out[hole] = cand
            if crc8(bytes(out)) == self.crc_seen:
                try:
                    creds = parse_payload_lax(bytes(out))
                except CodecError:
                    return
                self.payload = bytes(out)
                self.credentials = creds
                self.phase = Phase.COMPLETE
                return


def decoder_feed(state: DecoderState, length: int) -> DecoderState:
    """Feed one observed datagram length into the decoder state."""
    return state.feed(length)


def decode_lengths(lengths) -> DecoderState:
    """Run a fresh decoder over a complete length stream and finalize."""
    state = DecoderState()
    for length in lengths:
        state.feed(length)
        if state.phase is Phase.COMPLETE:
            break
    return state.finalize()
