import json

import httpx
import numpy as np
import pytest

from helpers import make_image

from addpipe.backends import (
    PROTOCOL_VERSION,
    BackendRequest,
    DetectedBox,
    RemoteBackend,
    StubEmbedder,
    StubGrounder,
    clip_box,
    decode_image_payload,
    encode_image_payload,
    parse_response,
    remote_call,
    stub_edit,
    stub_embed,
    stub_ground,
    stub_inpaint,
)
from addpipe.errors import (
    BackendError,
    BackendTimeoutError,
    ProtocolError,
    RemoteError,
    ShapeMismatchError,
)


# --- image payload codec ---------------------------------------------------------

def test_image_payload_round_trip_exact():
    img = make_image(seed=5, width=20, height=12)
    assert np.array_equal(decode_image_payload(encode_image_payload(img)), img)


def test_mask_payload_round_trip_exact():
    mask = np.random.default_rng(1).random((9, 13)) < 0.5
    assert np.array_equal(
        decode_image_payload(encode_image_payload(mask), as_mask=True), mask
    )


def test_payload_header_mismatch_rejected():
    payload = encode_image_payload(make_image(seed=0, width=8, height=8))
    payload["width"] = 9
    with pytest.raises(ProtocolError):
        decode_image_payload(payload)


def test_garbage_payload_rejected():
    with pytest.raises(ProtocolError):
        decode_image_payload({"format": "png", "data": "!!!", "width": 1, "height": 1})
    with pytest.raises(ProtocolError):
        decode_image_payload({"format": "bmp", "data": "", "width": 1, "height": 1})


# --- stub inpaint ------------------------------------------------------------------

def test_inpaint_empty_mask_is_identity():
    img = make_image(seed=2)
    out = stub_inpaint(img, np.zeros(img.shape[:2], dtype=bool))
    assert np.array_equal(out, img)


def test_inpaint_full_mask_is_mean_color():
    img = make_image(seed=3)
    mean_color = np.round(img.reshape(-1, 3).mean(axis=0)).astype(np.uint8)
    out = stub_inpaint(img, np.ones(img.shape[:2], dtype=bool))
    assert np.array_equal(out, np.broadcast_to(mean_color, img.shape))


def test_inpaint_half_mask_keeps_other_half_byte_exact():
    img = make_image(seed=4, width=32, height=16)
    mask = np.zeros((16, 32), dtype=bool)
    mask[:, :16] = True
    out = stub_inpaint(img, mask)
    assert np.array_equal(out[:, 16:], img[:, 16:])  # unmasked half untouched
    mean_color = np.round(img.reshape(-1, 3).mean(axis=0)).astype(np.uint8)
    assert np.array_equal(out[:, :16], np.broadcast_to(mean_color, (16, 16, 3)))


def test_inpaint_noise_fill_is_deterministic():
    img = make_image(seed=8)
    mask = np.zeros(img.shape[:2], dtype=bool)
    mask[2:6, 2:6] = True
    a = stub_inpaint(img, mask, fill="noise", seed=9)
    b = stub_inpaint(img, mask, fill="noise", seed=9)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, stub_inpaint(img, mask, fill="noise", seed=10))


def test_inpaint_shape_guard():
    with pytest.raises(ShapeMismatchError):
        stub_inpaint(make_image(seed=0), np.zeros((4, 4), dtype=bool))


# --- stub ground --------------------------------------------------------------------

def test_ground_empty_queries():
    assert stub_ground(make_image(seed=0), [], [DetectedBox("dog", (1, 1, 4, 4), 0.9)]) == []


def test_ground_excludes_off_query_labels():
    boxes = [DetectedBox("person", (1, 1, 4, 4), 0.8), DetectedBox("bicycle", (2, 2, 5, 5), 0.7)]
    hits = stub_ground(make_image(seed=0), ["bicycle"], boxes)
    assert [h.label for h in hits] == ["bicycle"]


def test_ground_clips_out_of_bounds_box():
    img = make_image(seed=1)  # 64x64
    boxes = [DetectedBox("dog", (60.0, 60.0, 20.0, 20.0), 0.9)]
    (hit,) = stub_ground(img, ["dog"], boxes)
    assert hit.box == (60.0, 60.0, 4.0, 4.0)  # clip arithmetic
    assert clip_box((100, 100, 5, 5), 64, 64) is None


def test_grounder_keyed_fixtures():
    grounder = StubGrounder(
        {
            "img_a": [DetectedBox("dog", (1, 1, 3, 3), 0.9)],
            "*": [DetectedBox("dog", (5, 5, 3, 3), 0.5)],
        }
    )
    img = make_image(seed=0)
    assert grounder.ground(img, ["dog"], key="img_a")[0].box == (1.0, 1.0, 3.0, 3.0)
    assert grounder.ground(img, ["dog"], key="img_b")[0].box == (5.0, 5.0, 3.0, 3.0)
    assert grounder.ground(img, ["dog"])[0].box == (5.0, 5.0, 3.0, 3.0)


# --- stub embed ----------------------------------------------------------------------

def test_embed_is_content_deterministic():
    img = make_image(seed=6)
    v1, v2 = stub_embed(img), stub_embed(img.copy())
    assert np.array_equal(v1, v2)
    assert abs(np.linalg.norm(v1) - 1.0) < 1e-9


def test_embed_distinct_payloads_differ():
    fixtures = [make_image(seed=s) for s in range(5)] + ["Add a dog", "Add a cat"]
    vecs = [stub_embed(f) for f in fixtures]
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            assert float(vecs[i] @ vecs[j]) < 0.999


def test_embedder_text_and_image_modalities():
    emb = StubEmbedder(dim=32)
    assert emb.embed_text("hello").shape == (32,)
    assert emb.embed_image(make_image(seed=0)).shape == (32,)


# --- stub edit -----------------------------------------------------------------------

def test_edit_is_deterministic_and_changes_pixels():
    img = make_image(seed=7)
    a = stub_edit(img, "Add a dog.", seed=1)
    b = stub_edit(img, "Add a dog.", seed=1)
    assert np.array_equal(a, b)
    assert a.shape == img.shape
    assert not np.array_equal(a, img)
    assert not np.array_equal(a, stub_edit(img, "Add a cat.", seed=1))


# --- request validation -----------------------------------------------------------------

def test_request_validation_errors():
    img = make_image(seed=0)
    with pytest.raises(ProtocolError):
        BackendRequest(kind="warp", image=img).validate()
    with pytest.raises(ProtocolError):
        BackendRequest(kind="inpaint", image=img).validate()
    with pytest.raises(ShapeMismatchError):
        BackendRequest(kind="inpaint", image=img, mask=np.zeros((2, 2), bool)).validate()
    with pytest.raises(ProtocolError):
        BackendRequest(kind="ground", image=img, queries=[]).validate()
    with pytest.raises(ProtocolError):
        BackendRequest(kind="embed", modality="audio").validate()
    with pytest.raises(ProtocolError):
        BackendRequest(kind="edit", image=img, instruction="x", steps=0).validate()


# --- response validation ------------------------------------------------------------------

def _ground_body(**overrides):
    body = {
        "version": PROTOCOL_VERSION,
        "kind": "ground",
        "backend_id": "test",
        "boxes": [{"label": "dog", "box": [1, 2, 3, 4], "score": 0.5}],
    }
    body.update(overrides)
    return body


def test_parse_response_happy_path():
    resp = parse_response("ground", _ground_body())
    assert resp.boxes[0] == DetectedBox("dog", (1.0, 2.0, 3.0, 4.0), 0.5)


@pytest.mark.parametrize(
    "overrides",
    [
        {"version": 99},
        {"kind": "embed"},
        {"backend_id": ""},
        {"boxes": [{"label": "dog", "box": [1, 2, 3], "score": 0.5}]},
        {"boxes": [{"label": "dog", "box": [1, 2, 3, 4], "score": 1.5}]},
        {"boxes": None},
    ],
)
def test_parse_response_rejects_schema_violations(overrides):
    with pytest.raises(ProtocolError):
        parse_response("ground", _ground_body(**overrides))


def test_parse_response_checks_correlation_id():
    body = _ground_body(request_id="abc")
    assert parse_response("ground", body, request_id="abc").request_id == "abc"
    with pytest.raises(ProtocolError):
        parse_response("ground", body, request_id="xyz")


# --- remote client over a mock transport ------------------------------------------------------

def _bridge_handler(request: httpx.Request) -> httpx.Response:
    """Minimal in-test bridge speaking the wire protocol with stub models."""
    kind = request.url.path.rsplit("/", 1)[-1]
    body = json.loads(request.content)
    out = {"version": PROTOCOL_VERSION, "kind": kind, "backend_id": "mock-bridge",
           "request_id": body.get("request_id"), "latency_ms": 1.0}
    if kind == "inpaint":
        image = decode_image_payload(body["image"])
        mask = decode_image_payload(body["mask"], as_mask=True)
        out["image"] = encode_image_payload(stub_inpaint(image, mask))
    elif kind == "ground":
        out["boxes"] = [
            {"label": q, "box": [1.0, 1.0, 4.0, 4.0], "score": 0.9} for q in body["queries"]
        ]
    elif kind == "embed":
        payload = body.get("text") if body["modality"] == "text" else decode_image_payload(body["image"])
        out["vector"] = stub_embed(payload).tolist()
    elif kind == "edit":
        image = decode_image_payload(body["image"])
        out["image"] = encode_image_payload(
            stub_edit(image, body["instruction"], seed=body["seed"])
        )
    else:
        return httpx.Response(404, json={"code": "unknown_kind", "message": kind})
    return httpx.Response(200, json=out)


def _mock_client(handler=_bridge_handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_remote_inpaint_round_trips_byte_identical():
    img = make_image(seed=11)
    mask = np.zeros(img.shape[:2], dtype=bool)
    req = BackendRequest(kind="inpaint", image=img, mask=mask)
    resp = remote_call(req, "http://bridge", client=_mock_client())
    assert np.array_equal(resp.image, img)  # empty mask: exact echo
    assert resp.backend_id == "mock-bridge"


def test_remote_backend_full_surface():
    backend = RemoteBackend("http://bridge", client=_mock_client())
    img = make_image(seed=12)
    assert backend.inpaint(img, np.zeros(img.shape[:2], bool)).shape == img.shape
    boxes = backend.ground(img, ["dog", "cat"])
    assert {b.label for b in boxes} == {"dog", "cat"}
    vec = backend.embed_text("Add a dog")
    assert np.allclose(vec, stub_embed("Add a dog"))
    edited = backend.edit(img, "Add a dog.", seed=3)
    assert np.array_equal(edited, stub_edit(img, "Add a dog.", seed=3))


def test_remote_malformed_body_is_protocol_error():
    def handler(request):
        return httpx.Response(200, content=b"not json")

    req = BackendRequest(kind="embed", modality="text", text="x")
    with pytest.raises(ProtocolError):
        remote_call(req, "http://bridge", client=_mock_client(handler))


def test_remote_error_body_maps_to_remote_error():
    def handler(request):
        return httpx.Response(503, json={"code": "model_unavailable", "message": "no weights"})

    req = BackendRequest(kind="edit", image=make_image(seed=0), instruction="x")
    with pytest.raises(RemoteError) as excinfo:
        remote_call(req, "http://bridge", client=_mock_client(handler))
    assert excinfo.value.code == "model_unavailable"


def test_remote_retries_transport_failures_then_succeeds():
    calls = {"n": 0}

    def flaky(request):
        calls["n"] += 1
        if calls["n"] <= 2:
            raise httpx.ConnectError("boom", request=request)
        return _bridge_handler(request)

    req = BackendRequest(kind="embed", modality="text", text="x")
    resp = remote_call(req, "http://bridge", client=_mock_client(flaky), retries=3, retry_wait=0)
    assert resp.attempts == 3
    assert calls["n"] == 3


def test_remote_gives_up_after_retry_budget():
    def always_down(request):
        raise httpx.ConnectError("down", request=request)

    req = BackendRequest(kind="embed", modality="text", text="x")
    with pytest.raises(BackendError):
        remote_call(req, "http://bridge", client=_mock_client(always_down), retries=2, retry_wait=0)


def test_remote_timeout_maps_to_timeout_error():
    def sleepy(request):
        raise httpx.ReadTimeout("too slow", request=request)

    req = BackendRequest(kind="embed", modality="text", text="x")
    with pytest.raises(BackendTimeoutError):
        remote_call(req, "http://bridge", client=_mock_client(sleepy), retries=2, retry_wait=0)
