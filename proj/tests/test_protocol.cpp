#include <catch2/catch_amalgamated.hpp>

#include "symphony/protocol.hpp"

#include "support/generators.hpp"

using namespace symphony;
using namespace symphony::protocol;

namespace {

testgen::KeyPool& keys() {
    static testgen::KeyPool pool(8);
    return pool;
}

Envelope sample_beacon(std::size_t dim = 3) {
    const auto& kp = keys().at(0);
    Envelope e;
    e.sender = agent_id_from_public_key(kp.public_key);
    e.task_id = "t-1";
    e.chain_id = 0;
    e.subtask_index = 1;
    e.sent_at = 1723180800000ull;
    BeaconBody b;
    b.requirement_vector = {1.0, 0.0, 0.0};
    b.subtask_text = "What is the product of the roots?";
    b.respond_by = 1723180802000ull;
    e.body = std::move(b);
    sign(e, kp.secret_key);
    (void)dim;
    return e;
}

} // namespace

TEST_CASE("beacon envelope round-trips through canonical bytes") {
    Envelope e = sample_beacon();
    std::string bytes = encode(e);
    Envelope back = decode(bytes, {.dimension = 3});
    CHECK(back == e);
}

TEST_CASE("encode is deterministic") {
    Envelope e = sample_beacon();
    CHECK(encode(e) == encode(e));
}

TEST_CASE("non-finite reals are rejected at encode") {
    const auto& kp = keys().at(0);
    Envelope e;
    e.sender = agent_id_from_public_key(kp.public_key);
    e.task_id = "t-nan";
    e.sent_at = 1;
    BeaconResponseBody b;
    b.score = std::numeric_limits<double>::quiet_NaN();
    b.responded_at = 5;
    e.body = b;
    e.signature = std::string(128, 'a');
    CHECK_THROWS_AS(encode(e), EncodingError);
}

TEST_CASE("round-trip property over generated envelopes") {
    testgen::Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        Envelope e = testgen::random_envelope(rng, keys());
        Envelope back = decode(encode(e));
        REQUIRE(back == e);
        // canonicality: byte equality iff envelope equality
        REQUIRE(encode(back) == encode(e));
    }
}

TEST_CASE("truncated bytes raise DecodeError") {
    std::string bytes = encode(sample_beacon());
    CHECK_THROWS_AS(decode(bytes.substr(0, bytes.size() / 2), {.dimension = 3}), DecodeError);
    CHECK_THROWS_AS(decode("", {.dimension = 3}), DecodeError);
}

TEST_CASE("unknown msg_type built from valid canonical bytes") {
    std::string bytes = encode(sample_beacon());
    auto pos = bytes.find("\"beacon\"");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 8, "\"Gossip\"");
    CHECK_THROWS_AS(decode(bytes, {.dimension = 3}), UnknownMessageType);
}

TEST_CASE("wrong requirement dimension is rejected") {
    std::string bytes = encode(sample_beacon());
    CHECK_THROWS_AS(decode(bytes, {.dimension = 8}), DecodeError);
}

TEST_CASE("unexpected envelope keys are rejected") {
    canonical::Json j = canonical::parse(encode(sample_beacon()));
    j["extra"] = 1;
    CHECK_THROWS_AS(decode(j.dump(), {.dimension = 3}), DecodeError);
}

TEST_CASE("message taxonomy is closed") {
    CHECK(msg_type_from_name("beacon"));
    CHECK(msg_type_from_name("beacon_response"));
    CHECK(msg_type_from_name("task"));
    CHECK(msg_type_from_name("task_result"));
    CHECK_FALSE(msg_type_from_name("gossip"));
    CHECK_FALSE(msg_type_from_name("Beacon"));
}

TEST_CASE("task body enforces score bookkeeping") {
    const auto& kp = keys().at(1);
    Envelope e;
    e.sender = agent_id_from_public_key(kp.public_key);
    e.task_id = "t-task";
    e.subtask_index = 2;
    e.sent_at = 9;
    TaskBody b;
    b.subtask_text = "step";
    b.background = "bg";
    b.prior_results = {{"q1", "a1"}};
    b.accumulated_scores = {0.5};  // should be prior+1 == 2
    e.body = std::move(b);
    CHECK_THROWS_AS(validate(e), ValidationError);
}

TEST_CASE("sign then verify with the matching keypair") {
    const auto& kp = keys().at(2);
    Envelope e = sample_beacon();
    sign(e, kp.secret_key);
    CHECK(verify(e, kp.public_key));
}

TEST_CASE("verify with a different public key fails") {
    Envelope e = sample_beacon();  // signed by key 0
    CHECK(verify(e, keys().at(0).public_key));
    CHECK_FALSE(verify(e, keys().at(3).public_key));
}

TEST_CASE("any single-byte mutation of the signed region breaks verification") {
    const auto& kp = keys().at(0);
    Envelope e = sample_beacon();
    const std::string region = signed_bytes(e);
    const auto sig = util::from_hex(e.signature);
    REQUIRE(crypto::verify_detached(region, sig, kp.public_key));
    for (std::size_t i = 0; i < region.size(); ++i) {
        std::string mutated = region;
        mutated[i] = static_cast<char>(mutated[i] ^ 0x01);
        REQUIRE_FALSE(crypto::verify_detached(mutated, sig, kp.public_key));
    }
}

TEST_CASE("payload mutation after signing fails envelope verify") {
    const auto& kp = keys().at(0);
    Envelope e = sample_beacon();
    auto& b = std::get<BeaconBody>(e.body);
    b.subtask_text[0] = static_cast<char>(b.subtask_text[0] ^ 0x01);
    CHECK_FALSE(verify(e, kp.public_key));
}

TEST_CASE("malformed keys are reported") {
    Envelope e = sample_beacon();
    crypto::Bytes short_key(5, 0x11);
    CHECK_THROWS_AS(sign(e, short_key), KeyMaterialError);
    CHECK_THROWS_AS(verify(e, short_key), KeyMaterialError);
}

TEST_CASE("frame writer and reader agree under arbitrary chunking") {
    testgen::Rng rng(7);
    std::vector<std::string> payloads;
    std::string stream;
    for (int i = 0; i < 50; ++i) {
        payloads.push_back(testgen::random_text(rng, 200));
        stream += frame(payloads.back());
    }
    FrameReader reader;
    std::vector<std::string> got;
    std::size_t pos = 0;
    while (pos < stream.size()) {
        std::size_t n = 1 + rng() % 13;
        n = std::min(n, stream.size() - pos);
        for (auto& p : reader.feed(std::string_view(stream).substr(pos, n))) {
            got.push_back(std::move(p));
        }
        pos += n;
    }
    CHECK(got == payloads);
    CHECK(reader.pending_bytes() == 0);
}

TEST_CASE("oversized frame is rejected") {
    std::string header;
    header.push_back(static_cast<char>(0x7f));
    header.append(3, static_cast<char>(0xff));
    FrameReader reader;
    CHECK_THROWS_AS(reader.feed(header), DecodeError);
}

TEST_CASE("agent id shape") {
    const auto& kp = keys().at(4);
    AgentId id = agent_id_from_public_key(kp.public_key);
    CHECK(id.valid());
    CHECK(id.value.size() == 64);
    // distinct keys produce distinct ids
    CHECK(id != agent_id_from_public_key(keys().at(5).public_key));
}
