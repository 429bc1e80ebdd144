#include <doctest.h>

#include <random>
#include <string>

#include "gridcosim/protocols/crc16.hpp"
#include "oracles.hpp"
#include "random_frames.hpp"

using namespace gridcosim::protocols;

namespace {

Bytes ascii(const std::string& s)
{
    return Bytes(s.begin(), s.end());
}

C37Config two_phasor_config()
{
    C37Config cfg;
    cfg.prefix = {7, 1'700'000'000, 0};
    PmuChannelConfig p;
    p.station = "STATION A";
    p.idcode = 7;
    p.phasor_names = {"VA", "IA"};
    p.phasor_units = {0, 0x01000000};
    cfg.pmus.push_back(p);
    return cfg;
}

}  // namespace

TEST_CASE("crc16 check values")
{
    CHECK(crc16(Bytes{}) == 0xFFFF);
    CHECK(oracle::crc_bit_serial(ascii("123456789")) == 0x29B1);
    CHECK(crc16(ascii("123456789")) == 0x29B1);
}

TEST_CASE("crc16 table and bit-serial paths agree")
{
    std::mt19937_64 rng(1);
    for (int n = 0; n < 300; ++n) {
        Bytes b(static_cast<std::size_t>(rng() % 64));
        for (auto& x : b)
            x = static_cast<std::uint8_t>(rng());
        REQUIRE(crc16(b) == oracle::crc_bit_serial(b));
        REQUIRE(crc16_bitwise(b) == crc16(b));
    }
}

TEST_CASE("data frame size accounting")
{
    const auto cfg = two_phasor_config();
    CHECK(data_frame_size(cfg) == 42);
    C37Data d;
    d.prefix = cfg.prefix;
    d.pmus.push_back({kStatOk, {{1.0f, 0.0f}, {0.5f, -0.2f}}, 60.0f, 0.0f});
    const auto bytes = encode_data(d, cfg);
    CHECK(bytes.size() == 42);
    CHECK(bytes[0] == kC37Sync);
    CHECK(decode_data(bytes, &cfg) == d);
}

TEST_CASE("c37 round trips")
{
    std::mt19937_64 rng(2);
    for (int n = 0; n < 200; ++n) {
        const auto cfg = frames::random_config(rng);
        REQUIRE(decode_config(encode_config(cfg)) == cfg);
        const auto d = frames::random_data(rng, cfg);
        REQUIRE(decode_data(encode_data(d, cfg), &cfg) == d);
        const auto c = frames::random_command(rng);
        REQUIRE(decode_command(encode_command(c)) == c);
        const auto h = frames::random_header(rng);
        REQUIRE(decode_header(encode_header(h)) == h);
    }
}

TEST_CASE("command frame is 18 bytes and unknown codes are rejected")
{
    C37Command cmd{{7, 100, 0}, 2};
    const auto bytes = encode_command(cmd);
    CHECK(bytes.size() == 18);
    CHECK(crc16(std::span(bytes).first(16)) == ((bytes[16] << 8) | bytes[17]));

    C37Command bad{{7, 100, 0}, 9};
    try {
        decode_command(encode_command(bad));
        FAIL("accepted command 9");
    } catch (const C37DecodeError& e) {
        CHECK(e.code() == C37Error::UnknownCommandCode);
    }
}

TEST_CASE("data frame needs a bound config")
{
    const auto cfg = two_phasor_config();
    C37Data d;
    d.prefix = cfg.prefix;
    d.pmus.push_back({kStatOk, {{1.0f, 0.0f}, {0.5f, -0.2f}}, 60.0f, 0.0f});
    const auto bytes = encode_data(d, cfg);
    try {
        decode_data(bytes, nullptr);
        FAIL("decoded without config");
    } catch (const C37DecodeError& e) {
        CHECK(e.code() == C37Error::NoConfigBound);
    }
}

TEST_CASE("single byte corruption is always detected")
{
    const auto cfg = two_phasor_config();
    C37Data d;
    d.prefix = cfg.prefix;
    d.pmus.push_back({kStatOk, {{1.0f, 0.1f}, {0.5f, -0.2f}}, 60.0f, 0.0f});
    const auto good = encode_data(d, cfg);
    int detected = 0, flips = 0;
    for (std::size_t i = 0; i < good.size(); ++i) {
        for (int mask = 1; mask < 256; ++mask) {
            auto b = good;
            b[i] ^= static_cast<std::uint8_t>(mask);
            ++flips;
            try {
                decode_frame(b, &cfg);
            } catch (const C37DecodeError& e) {
                if (e.code() == C37Error::BadCrc || e.code() == C37Error::BadSync)
                    ++detected;
            }
        }
    }
    CHECK(detected == flips);
}

TEST_CASE("c37 stream decoder skips garbage and damaged frames")
{
    std::mt19937_64 rng(3);
    const auto cfg = frames::random_config(rng);
    const auto a = encode_config(cfg);
    auto damaged = encode_data(frames::random_data(rng, cfg), cfg);
    damaged[10] ^= 0x40;
    const auto c = encode_command(frames::random_command(rng));
    Bytes stream{0x01, 0x02, 0xAA};
    stream.insert(stream.end(), a.begin(), a.end());
    stream.insert(stream.end(), damaged.begin(), damaged.end());
    stream.insert(stream.end(), c.begin(), c.end());

    C37StreamDecoder dec;
    // Feed in uneven chunks.
    for (std::size_t i = 0; i < stream.size(); i += 7)
        dec.feed(std::span(stream).subspan(i, std::min<std::size_t>(7, stream.size() - i)));
    std::vector<Bytes> out;
    while (auto f = dec.next())
        out.push_back(*f);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == a);
    CHECK(out[1] == c);
    CHECK(dec.discarded_bytes() > 0);
}

TEST_CASE("dnp round trips of every kind")
{
    std::mt19937_64 rng(4);
    for (int n = 0; n < 500; ++n) {
        const auto m = frames::random_dnp(rng, n);
        REQUIRE(decode_dnp(encode_dnp(m)) == m);
    }
    DnpMessage three{1, 2, 3, AnalogInputBlock{1234, {{0, 1.5, 1}, {1, -2.0, 1}, {7, 0.25, 3}}}};
    CHECK(decode_dnp(encode_dnp(three)) == three);
}

TEST_CASE("dnp single byte corruption is detected")
{
    DnpMessage m{9, 1, 100, AnalogCommand{2001, 0.05}};
    const auto good = encode_dnp(m);
    for (std::size_t i = 0; i < good.size(); ++i) {
        auto b = good;
        b[i] ^= 0x5A;
        try {
            decode_dnp(b);
            FAIL("flip at " << i << " not detected");
        } catch (const DnpDecodeError& e) {
            CHECK((e.code() == DnpError::BadCrc || e.code() == DnpError::BadMagic));
        }
    }
}

TEST_CASE("binary trip command is acknowledged by a live endpoint")
{
    std::vector<DnpMessage> seen;
    DnpEndpoint ep(100, [&](const DnpMessage& m) {
        seen.push_back(m);
        return AckStatus::Ok;
    });
    DnpMessage cmd{41, 1, 100, BinaryCommand{3, BinaryOperation::Trip}};
    const auto reply = ep.receive(encode_dnp(cmd));
    REQUIRE(reply);
    const auto ack = decode_dnp(*reply);
    REQUIRE(std::holds_alternative<Ack>(ack.body));
    CHECK(std::get<Ack>(ack.body).acked_seq == 41);
    CHECK(std::get<Ack>(ack.body).status == AckStatus::Ok);
    CHECK(ack.dst == 1);
    CHECK(seen.size() == 1);

    DnpMessage data{1, 1, 100, AnalogInputBlock{0, {}}};
    CHECK_FALSE(ep.receive(encode_dnp(data)));
}

TEST_CASE("dnp stream reports truncation and resynchronizes")
{
    const auto a = encode_dnp({1, 1, 2, AnalogCommand{5, 1.0}});
    const auto b = encode_dnp({2, 1, 2, BinaryCommand{6, BinaryOperation::Close}});
    Bytes stream(a.begin(), a.begin() + 8);  // cut short
    stream.insert(stream.end(), b.begin(), b.end());

    DnpStreamDecoder dec;
    dec.feed(stream);
    std::vector<DnpStreamDecoder::Item> items;
    while (auto it = dec.next())
        items.push_back(*it);
    if (auto tail = dec.finish())
        items.push_back(*tail);
    REQUIRE(items.size() == 2);
    REQUIRE(items[0].error);
    CHECK(*items[0].error == DnpError::TruncatedBody);
    REQUIRE(items[1].message);
    CHECK(items[1].message->seq == 2);

    DnpStreamDecoder tail;
    tail.feed(std::span(a).first(a.size() - 3));
    CHECK_FALSE(tail.next());
    const auto fin = tail.finish();
    REQUIRE(fin);
    CHECK(*fin->error == DnpError::TruncatedBody);
}

TEST_CASE("unknown dnp kind")
{
    auto bytes = encode_dnp({1, 1, 2, Ack{1, AckStatus::Ok}});
    bytes[4] = 0x7F;
    const auto crc = crc16(std::span(bytes).first(bytes.size() - 2));
    bytes[bytes.size() - 2] = static_cast<std::uint8_t>(crc >> 8);
    bytes[bytes.size() - 1] = static_cast<std::uint8_t>(crc);
    try {
        decode_dnp(bytes);
        FAIL("accepted kind 0x7F");
    } catch (const DnpDecodeError& e) {
        CHECK(e.code() == DnpError::UnknownKind);
    }
}
