import json
import socket
import threading

import pytest
from hypothesis import given, strategies as st

from morlcam.camproto import (
    ERROR,
    GET_FRAME,
    GET_PARAMS,
    NO_SEQ,
    OK,
    SET_PARAMS,
    CameraClient,
    CameraDevice,
    LatencyModel,
    ProtocolError,
    RemoteCameraEnvironment,
    Request,
    Response,
    TimingError,
    VirtualClock,
    WallClock,
    decode_request,
    decode_response,
    encode,
    running_server,
)
from morlcam.camsim import CameraEnvironment, capture, load_scenario, measure, scene_at
from morlcam.core import DEFAULT_SETTINGS, CameraSettings
from morlcam.harness import agent_config
from morlcam.estimators import SyntheticEstimator
from morlcam.morl import MorlAgent, dump_tables, run

S = CameraSettings(40, 90, 60, 100)
settings_st = st.builds(CameraSettings, *[st.integers(0, 100)] * 4)


@pytest.fixture(scope="module")
def scenario():
    return load_scenario("daynight")


@pytest.fixture
def server(scenario):
    device = CameraDevice(scenario, step_period_ms=500)
    with running_server(device) as addr:
        yield device, addr


@pytest.fixture
def client(server):
    _, (host, port) = server
    with CameraClient(host, port) as c:
        yield c


class TestCodec:
    def test_set_params_roundtrip(self):
        req = Request(1, SET_PARAMS, S)
        assert decode_request(encode(req)) == req

    @given(st.integers(0, 2 ** 53), st.sampled_from([GET_PARAMS, GET_FRAME]),
           st.one_of(st.none(), st.floats(0, 1e6), st.integers(0, 10 ** 6)))
    def test_request_roundtrip(self, seq, op, wait):
        req = Request(seq, op, None, wait)
        assert decode_request(encode(req)) == req

    @given(settings_st, st.integers(0, 10 ** 9))
    def test_settings_roundtrip(self, s, seq):
        assert decode_request(encode(Request(seq, SET_PARAMS, s))).settings == s

    @given(st.floats(0, 1e9, allow_nan=False, allow_infinity=False))
    def test_float_timestamps_exact(self, ts):
        resp = Response(3, OK, {"timestamp_ms": ts})
        assert decode_response(encode(resp)).payload["timestamp_ms"] == ts

    def test_397_as_decimal_text(self):
        wire = encode(Response(1, OK, {"timestamp_ms": 39.7}))
        assert b'"timestamp_ms":39.7' in wire
        assert decode_response(wire) == Response(1, OK, {"timestamp_ms": 39.7})

    def test_one_line(self):
        wire = encode(Response(1, ERROR, {"error": "a\nb"}))
        assert wire.count(b"\n") == 1 and wire.endswith(b"\n")
        assert decode_response(wire).payload["error"] == "a\nb"

    @pytest.mark.parametrize("line", [
        b"", b"\n", b"   \n", b"xyz\n", b"[1,2]\n", b'{"seq":1,"op":"GET_PARAMS"} trailing\n',
        b'{"seq":1,"seq":2,"op":"GET_PARAMS"}\n', b'{"seq":1,"op":"GET_PARAMS"}{}\n', b"\xff\xfe\n",
        b'{"seq":-1,"op":"GET_PARAMS"}\n', b'{"seq":true,"op":"GET_PARAMS"}\n', b'{"op":"GET_PARAMS"}\n',
        b'{"seq":1.5,"op":"GET_PARAMS"}\n', b'{"seq":NaN,"op":"GET_PARAMS"}\n',
    ])
    def test_rejects(self, line):
        with pytest.raises(ProtocolError) as exc:
            decode_request(line)
        assert exc.value.seq == NO_SEQ

    @pytest.mark.parametrize("obj", [
        {"seq": 4, "op": "REBOOT"},
        {"seq": 4, "op": SET_PARAMS},
        {"seq": 4, "op": SET_PARAMS, "settings": [1, 2, 3]},
        {"seq": 4, "op": SET_PARAMS, "settings": [1, 2, 3, 101]},
        {"seq": 4, "op": SET_PARAMS, "settings": [1, 2, 3, 4.0]},
        {"seq": 4, "op": GET_PARAMS, "settings": [1, 2, 3, 4]},
        {"seq": 4, "op": GET_PARAMS, "wait_ms": -1},
        {"seq": 4, "op": GET_PARAMS, "extra": 1},
    ])
    def test_rejects_with_seq(self, obj):
        with pytest.raises(ProtocolError) as exc:
            decode_request(json.dumps(obj))
        assert exc.value.seq == 4

    def test_response_validation(self):
        for bad in [b'{"seq":1,"status":"MAYBE","payload":{}}', b'{"seq":1,"status":"OK"}',
                    b'{"seq":1,"status":"OK","payload":[]}']:
            with pytest.raises(ProtocolError):
                decode_response(bad)


class TestLatency:
    def test_defaults(self):
        lat = LatencyModel()
        assert (lat.set_params_ms, lat.frame_upload_ms, lat.estimator_ms, lat.aggregate_ms) == (200, 39.7, 48, 1)

    def test_negative(self):
        with pytest.raises(ValueError):
            LatencyModel(set_params_ms=-1)

    def test_load(self, tmp_path):
        p = tmp_path / "lat.yaml"
        p.write_text("set_params_ms: 150\nframe_upload_ms: 20.5\n")
        assert LatencyModel.load(p) == LatencyModel(150, 20.5)
        p.write_text("bogus: 1\n")
        with pytest.raises(ValueError):
            LatencyModel.load(p)

    def test_virtual_clock_exact(self):
        c = VirtualClock()
        for _ in range(1000):
            c.advance(39.7)
        assert c.now_ms() == 39700.0
        with pytest.raises(ValueError):
            c.advance(-1)

    def test_wall_clock_advances(self):
        c = WallClock()
        c.advance(5)
        assert c.now_ms() >= 5


class TestDevice:
    def test_fresh_defaults(self, scenario):
        dev = CameraDevice(scenario)
        assert dev.handle(Request(1, GET_PARAMS)).payload["settings"] == [50, 50, 50, 50]

    def test_apply_after_exactly_200ms(self, scenario):
        dev = CameraDevice(scenario)
        ack = dev.handle(Request(1, SET_PARAMS, S))
        assert ack.payload == {"effective_ms": 200.0}
        assert dev.handle(Request(2, GET_PARAMS, wait_ms=100)).payload["settings"] == [50, 50, 50, 50]
        assert dev.handle(Request(3, GET_PARAMS, wait_ms=99.999)).payload["settings"] == [50, 50, 50, 50]
        got = dev.handle(Request(4, GET_PARAMS, wait_ms=0.001)).payload
        assert got == {"settings": [40, 90, 60, 100], "timestamp_ms": 200.0}

    def test_get_params_at_250(self, scenario):
        dev = CameraDevice(scenario)
        dev.handle(Request(1, SET_PARAMS, S))
        assert dev.handle(Request(2, GET_PARAMS, wait_ms=250)).payload["settings"] == list(S.as_tuple())

    def test_last_writer_wins(self, scenario):
        dev = CameraDevice(scenario)
        first, second = CameraSettings(10, 10, 10, 10), CameraSettings(90, 90, 90, 90)
        dev.handle(Request(1, SET_PARAMS, first))
        dev.handle(Request(2, SET_PARAMS, second, wait_ms=50))
        at = lambda ms: dev.handle(Request(0, GET_PARAMS, wait_ms=ms)).payload["settings"]
        assert at(149) == [50] * 4           # t = 199
        assert at(1) == [10] * 4             # t = 200: first takes effect at its own time
        assert at(49) == [10] * 4            # t = 249
        assert at(1) == [90] * 4             # t = 250: second wins from then on
        assert at(1000) == [90] * 4

    def test_frame_charges_upload(self, scenario):
        dev = CameraDevice(scenario, step_period_ms=100)
        p = dev.handle(Request(1, GET_FRAME)).payload
        assert p["timestamp_ms"] == 0.0 and p["step"] == 0
        assert dev.clock.now_ms() == 39.7
        p = dev.handle(Request(2, GET_FRAME, wait_ms=60.3)).payload
        assert p["timestamp_ms"] == 100.0 and p["step"] == 1
        latent, phase = scene_at(scenario, 1)
        assert p["measurements"] == list(measure(capture(latent, DEFAULT_SETTINGS)))
        assert p["phase"] == phase.name

    def test_bad_period(self, scenario):
        with pytest.raises(ValueError):
            CameraDevice(scenario, step_period_ms=0)


class TestServer:
    def test_set_then_get(self, client):
        assert client.get_params() == DEFAULT_SETTINGS
        assert client.set_params(S) == 200.0
        assert client.get_params(wait_ms=100) == DEFAULT_SETTINGS
        assert client.get_params(wait_ms=150) == S

    def test_garbage_keeps_connection(self, client):
        for junk in [b"xyz\n", b"\n", b"\xff\n", b'{"seq":1,"seq":1}\n', b"{" * 10 + b"\n"]:
            resp = client.send_raw(junk)
            assert resp.status == ERROR and resp.seq == NO_SEQ
        assert client.get_params() == DEFAULT_SETTINGS

    def test_unknown_op_echoes_seq(self, client):
        resp = client.send_raw(b'{"seq":77,"op":"REBOOT"}\n')
        assert resp == Response(77, ERROR, resp.payload) and "REBOOT" in resp.payload["error"]

    def test_sequence_must_increase(self, client):
        assert client.send_raw(b'{"seq":5,"op":"GET_PARAMS"}\n').ok
        resp = client.send_raw(b'{"seq":5,"op":"GET_PARAMS"}\n')
        assert resp.status == ERROR and resp.seq == 5
        assert client.send_raw(b'{"seq":3,"op":"GET_PARAMS"}\n').status == ERROR
        assert client.send_raw(b'{"seq":6,"op":"GET_PARAMS"}\n').ok

    def test_overlong_line(self, client):
        resp = client.send_raw(b'{"x":"' + b"a" * 100_000 + b'"}\n')
        assert resp.status == ERROR
        assert client.get_params() == DEFAULT_SETTINGS

    def test_abrupt_disconnect_does_not_hurt_others(self, server, client):
        _, (host, port) = server
        s = socket.create_connection((host, port))
        s.sendall(b'{"seq":1,"op":"GET_PAR')
        s.close()
        assert client.get_params() == DEFAULT_SETTINGS

    def test_concurrent_clients_serialized(self, server):
        device, (host, port) = server
        errors = []

        def worker(i):
            try:
                with CameraClient(host, port) as c:
                    for _ in range(20):
                        c.set_params(CameraSettings(i, i, i, i))
                        c.get_frame()
            except Exception as exc:  # pragma: no cover - surfaced below
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i * 10,)) for i in range(5)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        # 100 frames x 39.7 ms, charged one at a time on the shared clock
        assert device.clock.now_ms() == pytest.approx(100 * 39.7)

    @given(st.binary(max_size=200))
    def test_fuzz_never_kills_connection(self, scenario, data):
        device = CameraDevice(scenario)
        with running_server(device) as (host, port), CameraClient(host, port) as c:
            line = data.replace(b"\n", b" ") + b"\n"
            c.send_raw(line)
            assert c.get_params() == DEFAULT_SETTINGS


class TestTransportTransparency:
    def test_identical_trace(self):
        sc = load_scenario("demo3d")
        cfg = agent_config(sc, explore_steps=150)

        def agent():
            return MorlAgent([SyntheticEstimator(p, sc.noise_sigma, 4) for p in sc.au_profiles], cfg, 4)

        local = agent()
        local_trace = run(local, CameraEnvironment(sc), 150, 60)
        lat = LatencyModel()
        period = lat.control_step_ms(len(sc.au_profiles))
        device = CameraDevice(sc, lat, VirtualClock(), step_period_ms=period)
        with running_server(device) as (host, port), CameraClient(host, port) as c:
            remote = agent()
            remote_trace = run(remote, RemoteCameraEnvironment(c, period, len(sc.au_profiles), lat), 150, 60)
        assert remote_trace == local_trace
        assert [r.observation.measurements for r in remote_trace] == [r.observation.measurements for r in local_trace]
        assert dump_tables(remote.tables) == dump_tables(local.tables)

    def test_period_too_short(self):
        sc = load_scenario("demo3d")
        device = CameraDevice(sc, step_period_ms=100)
        with running_server(device) as (host, port), CameraClient(host, port) as c:
            env = RemoteCameraEnvironment(c, 100, 3)
            env.reset()
            with pytest.raises(TimingError):
                env.apply(S)
