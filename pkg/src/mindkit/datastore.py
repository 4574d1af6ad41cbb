"""On-device recording store: container format, encryption, upload queue.

Container layout (all integers little-endian):

    offset  size  field
    0       4     magic  b"MYND"
    4       2     format version (u16), currently 1
    6       4     header length H (u32)
    10      H     header, canonical JSON (UTF-8, sorted keys, compact)
    10+H    4*C*N samples, float32, sample-major interleaved
                  (frame 0 ch 0..C-1, frame 1 ch 0..C-1, ...)

The header carries subject and scenario identifiers, rates, channel
labels, the marker table, and free-form metadata.  Serialization is
canonical, so write(read(blob)) reproduces the input byte for byte.

Recordings never touch persistent storage in the clear: they are
sealed into hybrid envelopes (fresh AES-256-GCM key per file, wrapped
with the study's RSA public key) and queued for upload.  The envelope
layout is:

    offset  size  field
    0       4     magic  b"MYNE"
    4       2     envelope version (u16), currently 1
    6       2     key-wrap algorithm id (u16); 1 = RSA-OAEP-SHA256
    8       2     payload algorithm id (u16); 1 = AES-256-GCM
    10      32    recipient key id: SHA-256 of the public key (DER, SPKI)
    42      4     wrapped-key length W (u32)
    46      W     wrapped symmetric key
    46+W    4     nonce length (u32), 12 for GCM
    ...     12    nonce
    ...     8     ciphertext length (u64)
    ...     C     ciphertext including the 16-byte GCM tag

The fixed 42-byte header is bound into the GCM tag as associated
data, so flipping any envelope byte fails authentication.

Upload transports are pluggable; the HTTP adapter speaks

    POST {base}/recordings            body: envelope bytes
                                      headers: X-Subject-Token, X-Entry-Id
    GET  {base}/messages?locale=xx    response: JSON [{id, locale, text}]
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Protocol

import numpy as np
import requests
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

logger = logging.getLogger(__name__)

CONTAINER_MAGIC = b"MYND"
CONTAINER_VERSION = 1
ENVELOPE_MAGIC = b"MYNE"
ENVELOPE_VERSION = 1
ALG_KEYWRAP_RSA_OAEP_SHA256 = 1
ALG_PAYLOAD_AES_256_GCM = 1
GCM_NONCE_BYTES = 12
SUBJECT_ID_BYTES = 16  # 128-bit identifiers

# Marker codes shared by the recording and decoding paths.
MARKER_TRIAL_START = 1
MARKER_TRIAL_END = 2
MARKER_BLOCK_START = 10
MARKER_BLOCK_END = 11

_HEADER_STRUCT = struct.Struct("<4sHI")
_ENVELOPE_STRUCT = struct.Struct("<4sHHH32s")


class DatastoreError(Exception):
    pass


class ContainerFormatError(DatastoreError):
    pass


class BadMagicError(ContainerFormatError):
    pass


class UnsupportedVersionError(ContainerFormatError):
    pass


class TruncatedPayloadError(ContainerFormatError):
    pass


class MarkerRangeError(ContainerFormatError):
    pass


class DecryptionError(DatastoreError):
    """Authentication or unwrap failure; no plaintext is released."""


class TransportError(DatastoreError):
    pass


@dataclass(frozen=True)
class Marker:
    """Event annotation anchored to a frame index within the recording."""

    sample_index: int
    code: int
    label: str


@dataclass
class RecordingDataset:
    """One recording: interleaved samples plus annotations and metadata."""

    subject_id: str
    scenario_id: str
    day: int
    sample_rate: int
    channel_labels: tuple[str, ...]
    samples: np.ndarray  # (n_frames, n_channels) float32
    markers: list[Marker] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        data = np.asarray(self.samples, dtype=np.float32)
        if data.ndim != 2:
            raise ContainerFormatError("samples must be 2-D (frames x channels)")
        if data.shape[1] != len(self.channel_labels):
            raise ContainerFormatError(
                f"{data.shape[1]} sample columns but {len(self.channel_labels)} labels")
        self.samples = data
        self.channel_labels = tuple(self.channel_labels)
        self._check_markers()

    def _check_markers(self) -> None:
        n = self.samples.shape[0]
        last = -1
        for m in self.markers:
            if not 0 <= m.sample_index <= n:
                raise MarkerRangeError(
                    f"marker {m.label!r} at {m.sample_index} outside 0..{n}")
            if m.sample_index < last:
                raise MarkerRangeError("markers must be sorted by sample index")
            last = m.sample_index

    @property
    def n_frames(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.samples.shape[1])


def write_dataset(dataset: RecordingDataset) -> bytes:
    """Serialize to the container format; canonical and deterministic."""
    header = {
        "subject_id": dataset.subject_id,
        "scenario_id": dataset.scenario_id,
        "day": dataset.day,
        "sample_rate": dataset.sample_rate,
        "channel_labels": list(dataset.channel_labels),
        "n_frames": dataset.n_frames,
        "markers": [[m.sample_index, m.code, m.label] for m in dataset.markers],
        "metadata": dataset.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"),
                              ensure_ascii=False).encode("utf-8")
    payload = np.ascontiguousarray(dataset.samples, dtype="<f4").tobytes()
    return _HEADER_STRUCT.pack(CONTAINER_MAGIC, CONTAINER_VERSION, len(header_bytes)) \
        + header_bytes + payload


def read_dataset(blob: bytes) -> RecordingDataset:
    """Parse a container; every malformation maps to a distinct error."""
    if len(blob) < _HEADER_STRUCT.size:
        raise TruncatedPayloadError("blob shorter than the fixed header")
    magic, version, header_len = _HEADER_STRUCT.unpack_from(blob, 0)
    if magic != CONTAINER_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != CONTAINER_VERSION:
        raise UnsupportedVersionError(f"unsupported container version {version}")
    start = _HEADER_STRUCT.size
    if len(blob) < start + header_len:
        raise TruncatedPayloadError("header extends past end of blob")
    try:
        header = json.loads(blob[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"unreadable header: {exc}") from exc
    labels = tuple(header["channel_labels"])
    n_frames = int(header["n_frames"])
    expected = n_frames * len(labels) * 4
    payload = blob[start + header_len:]
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"expected {expected} payload bytes, got {len(payload)}")
    samples = np.frombuffer(payload, dtype="<f4").reshape(n_frames, len(labels))
    markers = [Marker(int(i), int(c), str(lbl)) for i, c, lbl in header["markers"]]
    return RecordingDataset(
        subject_id=header["subject_id"],
        scenario_id=header["scenario_id"],
        day=int(header["day"]),
        sample_rate=int(header["sample_rate"]),
        channel_labels=labels,
        samples=samples.copy(),
        markers=markers,
        metadata=header["metadata"],
    )


# --- hybrid encryption -------------------------------------------------

def generate_keypair(key_size: int = 2048) -> tuple[rsa.RSAPrivateKey, rsa.RSAPublicKey]:
    private = rsa.generate_private_key(public_exponent=65537, key_size=key_size)
    return private, private.public_key()


def save_private_key(key: rsa.RSAPrivateKey, path: str | Path) -> None:
    Path(path).write_bytes(key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    ))


def save_public_key(key: rsa.RSAPublicKey, path: str | Path) -> None:
    Path(path).write_bytes(key.public_bytes(
        serialization.Encoding.PEM,
        serialization.PublicFormat.SubjectPublicKeyInfo,
    ))


def load_private_key(path: str | Path) -> rsa.RSAPrivateKey:
    return serialization.load_pem_private_key(Path(path).read_bytes(), password=None)


def load_public_key(path: str | Path) -> rsa.RSAPublicKey:
    return serialization.load_pem_public_key(Path(path).read_bytes())


def public_key_id(key: rsa.RSAPublicKey) -> bytes:
    der = key.public_bytes(serialization.Encoding.DER,
                           serialization.PublicFormat.SubjectPublicKeyInfo)
    digest = hashes.Hash(hashes.SHA256())
    digest.update(der)
    return digest.finalize()


@dataclass(frozen=True)
class EncryptedEnvelope:
    key_wrap_alg: int
    payload_alg: int
    recipient_key_id: bytes
    wrapped_key: bytes
    nonce: bytes
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        head = _ENVELOPE_STRUCT.pack(ENVELOPE_MAGIC, ENVELOPE_VERSION,
                                     self.key_wrap_alg, self.payload_alg,
                                     self.recipient_key_id)
        return (head
                + struct.pack("<I", len(self.wrapped_key)) + self.wrapped_key
                + struct.pack("<I", len(self.nonce)) + self.nonce
                + struct.pack("<Q", len(self.ciphertext)) + self.ciphertext)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EncryptedEnvelope":
        if len(blob) < _ENVELOPE_STRUCT.size:
            raise TruncatedPayloadError("envelope shorter than fixed header")
        magic, version, wrap_alg, payload_alg, key_id = _ENVELOPE_STRUCT.unpack_from(blob, 0)
        if magic != ENVELOPE_MAGIC:
            raise BadMagicError(f"bad envelope magic {magic!r}")
        if version != ENVELOPE_VERSION:
            raise UnsupportedVersionError(f"unsupported envelope version {version}")
        pos = _ENVELOPE_STRUCT.size

        def take(n: int) -> bytes:
            nonlocal pos
            if len(blob) < pos + n:
                raise TruncatedPayloadError("envelope truncated")
            chunk = blob[pos:pos + n]
            pos += n
            return chunk

        wrapped = take(struct.unpack("<I", take(4))[0])
        nonce = take(struct.unpack("<I", take(4))[0])
        ciphertext = take(struct.unpack("<Q", take(8))[0])
        if pos != len(blob):
            raise ContainerFormatError("trailing bytes after envelope")
        return cls(wrap_alg, payload_alg, key_id, wrapped, nonce, ciphertext)


def _envelope_aad(key_wrap_alg: int, payload_alg: int, key_id: bytes) -> bytes:
    # the fixed header doubles as GCM associated data, so no envelope byte
    # is outside the authentication boundary
    return _ENVELOPE_STRUCT.pack(ENVELOPE_MAGIC, ENVELOPE_VERSION,
                                 key_wrap_alg, payload_alg, key_id)


def encrypt_envelope(plaintext: bytes, public_key: rsa.RSAPublicKey) -> EncryptedEnvelope:
    """Seal bytes with a fresh symmetric key wrapped for the recipient."""
    sym_key = AESGCM.generate_key(bit_length=256)
    nonce = os.urandom(GCM_NONCE_BYTES)
    key_id = public_key_id(public_key)
    aad = _envelope_aad(ALG_KEYWRAP_RSA_OAEP_SHA256, ALG_PAYLOAD_AES_256_GCM, key_id)
    ciphertext = AESGCM(sym_key).encrypt(nonce, plaintext, aad)
    wrapped = public_key.encrypt(sym_key, padding.OAEP(
        mgf=padding.MGF1(algorithm=hashes.SHA256()),
        algorithm=hashes.SHA256(), label=None))
    return EncryptedEnvelope(
        key_wrap_alg=ALG_KEYWRAP_RSA_OAEP_SHA256,
        payload_alg=ALG_PAYLOAD_AES_256_GCM,
        recipient_key_id=key_id,
        wrapped_key=wrapped,
        nonce=nonce,
        ciphertext=ciphertext,
    )


def decrypt_envelope(envelope: EncryptedEnvelope | bytes,
                     private_key: rsa.RSAPrivateKey) -> bytes:
    """Unwrap and decrypt; any tampering or key mismatch raises."""
    if isinstance(envelope, (bytes, bytearray)):
        envelope = EncryptedEnvelope.from_bytes(bytes(envelope))
    if envelope.key_wrap_alg != ALG_KEYWRAP_RSA_OAEP_SHA256:
        raise DecryptionError(f"unknown key-wrap algorithm {envelope.key_wrap_alg}")
    if envelope.payload_alg != ALG_PAYLOAD_AES_256_GCM:
        raise DecryptionError(f"unknown payload algorithm {envelope.payload_alg}")
    aad = _envelope_aad(envelope.key_wrap_alg, envelope.payload_alg,
                        envelope.recipient_key_id)
    try:
        sym_key = private_key.decrypt(envelope.wrapped_key, padding.OAEP(
            mgf=padding.MGF1(algorithm=hashes.SHA256()),
            algorithm=hashes.SHA256(), label=None))
        return AESGCM(sym_key).decrypt(envelope.nonce, envelope.ciphertext, aad)
    except (ValueError, InvalidTag) as exc:
        raise DecryptionError("envelope failed authentication") from exc


def generate_subject_id() -> str:
    """Random 128-bit subject identifier, URL-safe text."""
    return secrets.token_urlsafe(SUBJECT_ID_BYTES)


# --- upload queue ------------------------------------------------------

STATE_PENDING = "pending"
STATE_SENT = "sent"


@dataclass
class QueueEntry:
    entry_id: str
    filename: str
    kind: str
    subject_id: str
    created_seq: int
    attempts: int = 0
    state: str = STATE_PENDING


@dataclass(frozen=True)
class UploadResult:
    entry_id: str
    ok: bool
    error: str = ""


@dataclass(frozen=True)
class Announcement:
    message_id: str
    locale: str
    text: str


class Transport(Protocol):
    def send_recording(self, envelope: bytes, subject_token: str, entry_id: str) -> None: ...

    def fetch_messages(self, locale: str) -> list[Announcement]: ...


class UploadQueue:
    """Durable oldest-first queue of envelopes awaiting upload.

    Entries live as envelope files next to a JSON manifest; an entry is
    marked sent only after the transport acknowledged it, so a crash or
    an offline stretch only ever delays an upload.
    """

    MANIFEST = "queue.json"

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._entries: list[QueueEntry] = []
        self._next_seq = 0
        self._load()

    def _manifest_path(self) -> Path:
        return self.root / self.MANIFEST

    def _load(self) -> None:
        path = self._manifest_path()
        if not path.exists():
            return
        raw = json.loads(path.read_text())
        self._entries = [QueueEntry(**e) for e in raw["entries"]]
        self._next_seq = int(raw["next_seq"])

    def _save(self) -> None:
        payload = {
            "next_seq": self._next_seq,
            "entries": [asdict(e) for e in self._entries],
        }
        tmp = self._manifest_path().with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True, indent=1))
        tmp.replace(self._manifest_path())

    def enqueue(self, envelope: bytes, subject_id: str, kind: str = "recording") -> QueueEntry:
        seq = self._next_seq
        self._next_seq += 1
        entry_id = f"{seq:08d}-{_sha256_hex(envelope)[:12]}"
        filename = f"{entry_id}.envelope"
        (self.root / filename).write_bytes(envelope)
        entry = QueueEntry(entry_id=entry_id, filename=filename, kind=kind,
                           subject_id=subject_id, created_seq=seq)
        self._entries.append(entry)
        self._save()
        return entry

    def pending(self) -> list[QueueEntry]:
        return sorted((e for e in self._entries if e.state == STATE_PENDING),
                      key=lambda e: e.created_seq)

    def sent(self) -> list[QueueEntry]:
        return [e for e in self._entries if e.state == STATE_SENT]

    def envelope_bytes(self, entry: QueueEntry) -> bytes:
        return (self.root / entry.filename).read_bytes()


def flush_uploads(queue: UploadQueue, transport: Transport) -> list[UploadResult]:
    """Push pending entries oldest-first; failures stay queued."""
    results: list[UploadResult] = []
    for entry in queue.pending():
        blob = queue.envelope_bytes(entry)
        try:
            transport.send_recording(blob, entry.subject_id, entry.entry_id)
        except TransportError as exc:
            entry.attempts += 1
            results.append(UploadResult(entry.entry_id, False, str(exc)))
            logger.warning("upload of %s failed (attempt %d): %s",
                           entry.entry_id, entry.attempts, exc)
        else:
            entry.state = STATE_SENT
            results.append(UploadResult(entry.entry_id, True))
    queue._save()
    return results


def _sha256_hex(blob: bytes) -> str:
    digest = hashes.Hash(hashes.SHA256())
    digest.update(blob)
    return digest.finalize().hex()


class DirectoryTransport:
    """Store-and-forward into a local directory; useful offline and in tests."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def send_recording(self, envelope: bytes, subject_token: str, entry_id: str) -> None:
        target = self.root / "recordings" / subject_token
        try:
            target.mkdir(parents=True, exist_ok=True)
            (target / f"{entry_id}.envelope").write_bytes(envelope)
        except OSError as exc:
            raise TransportError(f"directory transport failed: {exc}") from exc

    def fetch_messages(self, locale: str) -> list[Announcement]:
        path = self.root / "messages.json"
        if not path.exists():
            return []
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise TransportError(f"cannot read messages: {exc}") from exc
        return _parse_messages(raw, locale)


class HttpTransport:
    """Adapter for the documented study-server HTTP endpoints."""

    def __init__(self, base_url: str, timeout_s: float = 10.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def send_recording(self, envelope: bytes, subject_token: str, entry_id: str) -> None:
        try:
            resp = requests.post(
                f"{self.base_url}/recordings", data=envelope,
                headers={"X-Subject-Token": subject_token,
                         "X-Entry-Id": entry_id,
                         "Content-Type": "application/octet-stream"},
                timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"POST /recordings failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"POST /recordings returned {resp.status_code}")

    def fetch_messages(self, locale: str) -> list[Announcement]:
        try:
            resp = requests.get(f"{self.base_url}/messages",
                                params={"locale": locale}, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"GET /messages failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"GET /messages returned {resp.status_code}")
        try:
            raw = resp.json()
        except ValueError as exc:
            raise TransportError(f"malformed message payload: {exc}") from exc
        return _parse_messages(raw, locale)


def _parse_messages(raw: object, locale: str) -> list[Announcement]:
    if not isinstance(raw, list):
        raise TransportError("message payload must be a list")
    out = []
    for item in raw:
        try:
            ann = Announcement(str(item["id"]), str(item["locale"]), str(item["text"]))
        except (TypeError, KeyError) as exc:
            logger.warning("skipping malformed message %r: %s", item, exc)
            continue
        if ann.locale == locale:
            out.append(ann)
    return out


class AnnouncementFetcher:
    """Polls a transport for study messages, deduplicating by id.

    Fetch failures are swallowed into an empty result so a session never
    blocks on the study server being reachable.
    """

    def __init__(self, transport: Transport) -> None:
        self.transport = transport
        self.seen_ids: set[str] = set()

    def fetch(self, locale: str) -> list[Announcement]:
        try:
            messages = self.transport.fetch_messages(locale)
        except TransportError as exc:
            logger.info("message fetch unavailable: %s", exc)
            return []
        fresh = [m for m in messages if m.message_id not in self.seen_ids]
        self.seen_ids.update(m.message_id for m in fresh)
        return fresh


# --- high-level write paths --------------------------------------------

def store_recording(dataset: RecordingDataset, public_key: rsa.RSAPublicKey,
                    queue: UploadQueue) -> QueueEntry:
    """Serialize, seal, and enqueue a recording without writing plaintext."""
    envelope = encrypt_envelope(write_dataset(dataset), public_key)
    return queue.enqueue(envelope.to_bytes(), dataset.subject_id, kind="recording")


def store_questionnaire(result: dict, subject_id: str, public_key: rsa.RSAPublicKey,
                        queue: UploadQueue) -> QueueEntry:
    """Seal and enqueue a questionnaire result document."""
    blob = json.dumps(result, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")
    envelope = encrypt_envelope(blob, public_key)
    return queue.enqueue(envelope.to_bytes(), subject_id, kind="questionnaire")
