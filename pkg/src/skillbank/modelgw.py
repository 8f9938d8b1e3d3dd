"""Single gateway for every vision-language-model and embedding call.

Two backends: ``HttpBackend`` speaks the common JSON chat-completion format,
``FixtureBackend`` answers from a canned ``{"role::scenario_key": text}`` map.
Embedders follow the same split.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BackendUnavailable, ConfigError, FixtureMiss, MalformedResponse

log = logging.getLogger(__name__)

ROLES = frozenset(
    {
        "extractor",
        "descriptor",
        "aligner",
        "discriminator",
        "generator",
        "planner",
        "constraint_extractor",
        "waypoint_selector",
    }
)
DEFAULT_DIM = 512
DEFAULT_TIMEOUT = 60.0


@dataclass(frozen=True)
class ModelRequest:
    role: str
    scenario_key: str
    text_parts: tuple[str, ...] = ()
    image_refs: tuple[Path, ...] = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown model role {self.role!r}")
        if not self.scenario_key:
            raise ValueError("scenario_key must be non-empty")
        object.__setattr__(self, "text_parts", tuple(self.text_parts))
        object.__setattr__(self, "image_refs", tuple(Path(p) for p in self.image_refs))

    @property
    def fixture_key(self) -> str:
        return f"{self.role}::{self.scenario_key}"


@dataclass(frozen=True)
class ModelResponse:
    text: str
    backend_id: str


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    source: str = "text"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding has non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


# -- chat backends -----------------------------------------------------------


class FixtureBackend:
    """Deterministic canned responses keyed by ``role::scenario_key``."""

    backend_id = "fixture"

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)

    @classmethod
    def load(cls, path) -> "FixtureBackend":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read fixture file {path}: {exc}") from exc
        if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
            raise ConfigError(f"fixture file {path} must map strings to strings")
        return cls(data)

    def complete(self, request: ModelRequest) -> ModelResponse:
        try:
            text = self.responses[request.fixture_key]
        except KeyError:
            raise FixtureMiss(request.role, request.scenario_key) from None
        return ModelResponse(text, self.backend_id)


def _data_uri(path: Path) -> str:
    mime = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
    try:
        payload = base64.b64encode(path.read_bytes()).decode("ascii")
    except OSError as exc:
        raise BackendUnavailable(f"cannot read image {path}: {exc}") from exc
    return f"data:{mime};base64,{payload}"


class HttpBackend:
    """Chat-completion client.

    ``role_urls`` optionally routes individual roles to other endpoints.
    """

    def __init__(self, url, token=None, model="default", timeout=DEFAULT_TIMEOUT, role_urls=None, transport=None):
        import httpx

        if not url:
            raise ConfigError("HTTP backend needs an endpoint URL (MODELGW_URL)")
        self.url = url
        self.model = model
        self.role_urls = dict(role_urls or {})
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.backend_id = f"http:{model}"

    def payload(self, request: ModelRequest) -> dict:
        content = [{"type": "text", "text": t} for t in request.text_parts]
        content += [{"type": "image_url", "image_url": {"url": _data_uri(p)}} for p in request.image_refs]
        return {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": f"You are the {request.role} stage. Scenario: {request.scenario_key}"},
                {"role": "user", "content": content},
            ],
        }

    def complete(self, request: ModelRequest) -> ModelResponse:
        import httpx

        url = self.role_urls.get(request.role, self.url)
        try:
            resp = self._client.post(url, json=self.payload(request))
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{request.role}: {exc}") from exc
        if resp.status_code >= 400:
            raise BackendUnavailable(f"{request.role}: HTTP {resp.status_code}")
        try:
            message = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"{request.role}: unexpected response body") from exc
        if isinstance(message, list):
            message = "".join(p.get("text", "") for p in message if isinstance(p, dict))
        if not isinstance(message, str) or not message.strip():
            raise MalformedResponse(f"{request.role}: empty completion")
        return ModelResponse(message, self.backend_id)


# -- embedders ---------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of a splitmix64 stream seeded with ``seed``."""
    state = np.uint64(seed) + _GOLDEN * np.arange(1, n + 1, dtype=np.uint64)
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def content_bytes(content) -> tuple[bytes, str]:
    """Bytes hashed for ``content``: UTF-8 text, or the image file bytes."""
    if isinstance(content, Path):
        try:
            return b"image:" + content.read_bytes(), "image"
        except OSError as exc:
            raise BackendUnavailable(f"cannot read image {content}: {exc}") from exc
    if isinstance(content, str):
        return b"text:" + content.encode("utf-8"), "text"
    raise TypeError(f"cannot embed {type(content).__name__}")


class FixtureEmbedder:
    """Hash-seeded pseudo-embeddings; ``pinned`` overrides chosen texts."""

    backend_id = "fixture"

    def __init__(self, dim: int = DEFAULT_DIM, pinned: dict | None = None):
        if dim < 1:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim
        self.pinned = {}
        for key, vec in (pinned or {}).items():
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (dim,):
                raise ValueError(f"pinned vector for {key!r} has shape {v.shape}")
            self.pinned[key] = v / np.linalg.norm(v)

    def embed(self, content) -> EmbeddingVector:
        if isinstance(content, str) and content in self.pinned:
            return EmbeddingVector(self.pinned[content].copy(), "text")
        data, source = content_bytes(content)
        seed = int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")
        raw = splitmix64(seed, self.dim)
        u = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53
        v = 2.0 * u - 1.0
        return EmbeddingVector(v / np.linalg.norm(v), source)


class HttpEmbedder:
    """Embedding endpoint taking ``{"model", "input"}`` and returning ``data[0].embedding``."""

    def __init__(self, url, token=None, model="default", dim=DEFAULT_DIM, timeout=DEFAULT_TIMEOUT, transport=None):
        import httpx

        if not url:
            raise ConfigError("HTTP embedder needs an endpoint URL")
        self.url = url
        self.model = model
        self.dim = dim
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def embed(self, content) -> EmbeddingVector:
        import httpx

        if isinstance(content, Path):
            body = {"model": self.model, "input": [{"image": _data_uri(content)}]}
            source = "image"
        else:
            body = {"model": self.model, "input": content}
            source = "text"
        try:
            resp = self._client.post(self.url, json=body)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"embed: {exc}") from exc
        if resp.status_code >= 400:
            raise BackendUnavailable(f"embed: HTTP {resp.status_code}")
        try:
            v = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse("embed: unexpected response body") from exc
        if v.shape != (self.dim,) or not np.all(np.isfinite(v)) or not np.any(v):
            raise MalformedResponse(f"embed: expected {self.dim} finite values")
        return EmbeddingVector(v / np.linalg.norm(v), source)


@dataclass
class Gateway:
    """What the pipeline modules talk to: one chat backend and one embedder."""

    backend: object
    embedder: object = field(default_factory=FixtureEmbedder)

    @property
    def dim(self) -> int:
        return self.embedder.dim

    def complete(self, request: ModelRequest) -> ModelResponse:
        response = self.backend.complete(request)
        log.debug("%s -> %d chars via %s", request.fixture_key, len(response.text), response.backend_id)
        return response

    def ask(self, role, scenario_key, text_parts=(), image_refs=()) -> str:
        return self.complete(ModelRequest(role, scenario_key, tuple(text_parts), tuple(image_refs))).text

    def embed(self, content) -> EmbeddingVector:
        return self.embedder.embed(content)

    @classmethod
    def fixture(cls, responses=None, dim=DEFAULT_DIM, pinned=None) -> "Gateway":
        if isinstance(responses, (str, Path)):
            backend = FixtureBackend.load(responses)
        else:
            backend = FixtureBackend(responses or {})
        return cls(backend, FixtureEmbedder(dim, pinned))

    @classmethod
    def from_env(cls, dim=DEFAULT_DIM, timeout=DEFAULT_TIMEOUT, env=None) -> "Gateway":
        env = os.environ if env is None else env
        url = env.get("MODELGW_URL")
        if not url:
            raise ConfigError("MODELGW_URL is not set and no fixture file was given")
        token = env.get("MODELGW_TOKEN")
        model = env.get("MODELGW_MODEL", "default")
        embed_url = env.get("MODELGW_EMBED_URL") or url.rsplit("/chat/completions", 1)[0] + "/embeddings"
        return cls(
            HttpBackend(url, token, model, timeout),
            HttpEmbedder(embed_url, token, env.get("MODELGW_EMBED_MODEL", model), dim, timeout),
        )
