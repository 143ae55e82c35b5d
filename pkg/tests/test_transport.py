from __future__ import annotations

import random

import pytest

import seismoflow as sf
from seismoflow.errors import BadFilter, Disconnected, MalformedFeed, NetworkError
from seismoflow.transport import validate_filter, validate_topic

from oracles import ref_topic_matches


class TestFilterValidation:
    @pytest.mark.parametrize("good", [
        "a", "a/b", "a/+/c", "a/#", "#", "+", "+/+", "a//b", "a/+/#",
    ])
    def test_accepts(self, good):
        validate_filter(good)

    @pytest.mark.parametrize("bad", [
        "", "a/#/b", "a#", "#/a", "a/b#", "a/+b", "ab+", "a/#b",
    ])
    def test_rejects(self, bad):
        with pytest.raises(BadFilter):
            validate_filter(bad)

    def test_publish_topic_must_be_concrete(self):
        with pytest.raises(BadFilter):
            validate_topic("a/#")
        with pytest.raises(BadFilter):
            validate_topic("a/+/b")
        with pytest.raises(BadFilter):
            validate_topic("")


class TestTopicMatching:
    @pytest.mark.parametrize("topic_filter,topic,expected", [
        ("a/+/c", "a/b/c", True),
        ("a/#", "a/b/c/d", True),
        ("a/#", "a", True),          # '#' includes the parent level
        ("a/+", "a/b/c", False),
        ("a/b", "a/b", True),
        ("a/b", "a/c", False),
        ("+", "a", True),
        ("#", "x/y/z", True),
        ("a/+/c", "a//c", True),     # '+' matches an empty level
    ])
    def test_known_cases(self, topic_filter, topic, expected):
        assert sf.topic_matches(topic_filter, topic) is expected

    def test_agrees_with_reference_on_5000_random_pairs(self):
        rng = random.Random(424242)
        alphabet = ["a", "b", "c", "ab", ""]
        checked = 0
        while checked < 5000:
            depth = rng.randint(1, 5)
            topic = "/".join(rng.choice(alphabet) for _ in range(depth))
            f_depth = rng.randint(1, 5)
            levels = []
            for i in range(f_depth):
                roll = rng.random()
                if roll < 0.25:
                    levels.append("+")
                elif roll < 0.35 and i == f_depth - 1:
                    levels.append("#")
                else:
                    levels.append(rng.choice(alphabet))
            topic_filter = "/".join(levels)
            try:
                validate_filter(topic_filter)
                validate_topic(topic)
            except BadFilter:
                continue
            assert sf.topic_matches(topic_filter, topic) == \
                ref_topic_matches(topic_filter, topic), (topic_filter, topic)
            checked += 1


class TestInMemoryBroker:
    def test_two_matching_subscribers_two_deliveries(self, broker):
        hits = []
        broker.subscribe("a/+", lambda m: hits.append(("s1", m.topic)))
        broker.subscribe("a/b", lambda m: hits.append(("s2", m.topic)))
        count = broker.publish("a/b", b"x")
        assert count == 2
        assert hits == [("s1", "a/b"), ("s2", "a/b")]

    def test_no_subscribers_is_still_success(self, broker):
        assert broker.publish("lonely/topic", b"x") == 0

    def test_publish_wildcard_is_rejected(self, broker):
        with pytest.raises(BadFilter):
            broker.publish("a/#", b"x")

    def test_exactly_once_per_matching_subscriber(self, broker):
        rng = random.Random(7)
        log = []
        filters = ["s/+/t", "s/#", "s/a/t", "q/+"]
        for i, topic_filter in enumerate(filters):
            broker.subscribe(topic_filter,
                             lambda m, i=i: log.append((i, m.topic, bytes(m.body))))
        topics = ["s/a/t", "s/b/t", "s/x", "q/1", "other"]
        sent = []
        for n in range(200):
            topic = rng.choice(topics)
            body = str(n).encode()
            sent.append((topic, body))
            broker.publish(topic, body)
        for i, topic_filter in enumerate(filters):
            expected = [(i, t, b) for (t, b) in sent
                        if sf.topic_matches(topic_filter, t)]
            got = [entry for entry in log if entry[0] == i]
            assert got == expected  # exactly one delivery each, publish order

    def test_unsubscribe_stops_delivery(self, broker):
        hits = []
        token = broker.subscribe("t", lambda m: hits.append(1))
        broker.publish("t", b"1")
        broker.unsubscribe(token)
        broker.publish("t", b"2")
        assert hits == [1]

    def test_body_cap(self, clock):
        small = sf.InMemoryBroker(clock=clock, body_cap=4)
        with pytest.raises(ValueError):
            small.publish("t", b"12345")

    def test_closed_broker_raises(self, broker):
        broker.close()
        with pytest.raises(Disconnected):
            broker.publish("t", b"1")

    def test_received_at_comes_from_clock(self, clock, broker):
        seen = []
        broker.subscribe("t", lambda m: seen.append(m.received_at_ms))
        clock.advance_to(1234)
        broker.publish("t", b"1")
        assert seen == [1234]


class TestPollFeed:
    def test_unseen_filtering(self, clock):
        with sf.ScriptedFeedServer(clock) as feed:
            e1 = sf.EarthquakeEvent("e1", 4.1, 41.9, 12.5, 1000)
            e2 = sf.EarthquakeEvent("e2", 2.0, 42.0, 13.0, 2000)
            feed.add_event(e1, visible_from_ms=0)
            feed.add_event(e2, visible_from_ms=0)

            events, seen = sf.poll_feed(feed.url, set())
            assert [e.event_id for e in events] == ["e1", "e2"]
            assert seen == {"e1", "e2"}

            events, seen = sf.poll_feed(feed.url, {"e1"})
            assert [e.event_id for e in events] == ["e2"]
            assert seen == {"e1", "e2"}

            events, _ = sf.poll_feed(feed.url, seen)
            assert events == []

    def test_visibility_follows_clock(self, clock):
        with sf.ScriptedFeedServer(clock) as feed:
            feed.add_event(sf.EarthquakeEvent("late", 5.0, 40.0, 14.0, 9000),
                           visible_from_ms=5000)
            events, _ = sf.poll_feed(feed.url, set())
            assert events == []
            clock.advance_to(5000)
            events, _ = sf.poll_feed(feed.url, set())
            assert [e.event_id for e in events] == ["late"]

    def test_malformed_feed(self, tmp_path, clock):
        import threading
        from http.server import BaseHTTPRequestHandler, HTTPServer

        class BadHandler(BaseHTTPRequestHandler):
            def do_GET(self):
                body = b"not json"
                self.send_response(200)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        httpd = HTTPServer(("127.0.0.1", 0), BadHandler)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        try:
            with pytest.raises(MalformedFeed):
                sf.poll_feed(f"http://127.0.0.1:{httpd.server_address[1]}/", set())
        finally:
            httpd.shutdown()
            httpd.server_close()

    def test_unreachable_endpoint(self):
        with pytest.raises(NetworkError):
            sf.poll_feed("http://127.0.0.1:1/feed", set(), timeout_s=0.2)


class TestBrokerProfile:
    def test_from_env(self):
        env = {
            "SEISMOFLOW_BROKER_URL": "mqtt://broker.example:1883",
            "SEISMOFLOW_BROKER_USERNAME": "fleet",
            "SEISMOFLOW_BROKER_PASSWORD": "secret",
            "SEISMOFLOW_QOS": "2",
            "SEISMOFLOW_TLS": "true",
        }
        profile = sf.BrokerProfile.from_env(env)
        assert profile.url == "mqtt://broker.example:1883"
        assert profile.username == "fleet"
        assert profile.qos == 2
        assert profile.use_tls is True

    def test_defaults(self):
        profile = sf.BrokerProfile.from_env({"SEISMOFLOW_BROKER_URL": "h:1"})
        assert profile.qos == 1
        assert profile.use_tls is False
        assert profile.username is None

    def test_no_url_means_no_profile(self):
        assert sf.BrokerProfile.from_env({}) is None

    def test_bad_qos_rejected(self):
        with pytest.raises(ValueError):
            sf.BrokerProfile(url="x", qos=7)
