#include <doctest.h>

#include <vmct/imagefmt.hpp>
#include <vmct/rng.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace vmct;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "vmct_fmt_tests";
    fs::create_directories(dir);
    return dir;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    REQUIRE(f.good());
    std::vector<unsigned char> data(static_cast<std::size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    REQUIRE(f.good());
    return data;
}

void spit(const fs::path& p, const std::vector<unsigned char>& data) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

std::uint32_t le32(const std::vector<unsigned char>& d, std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, d.data() + off, 4);
    return v;
}

}  // namespace

TEST_CASE("vmct: header is exactly 24 bytes with the documented layout") {
    ImageF img(3, 2);
    for (std::size_t i = 0; i < img.size(); ++i) img.v[i] = static_cast<float>(i) - 2.5f;
    const fs::path p = temp_dir() / "hdr.vmct";
    write_vmct(p.string(), img, 2);

    const auto bytes = slurp(p);
    REQUIRE(bytes.size() == 24 + 4 * 6);
    CHECK(std::memcmp(bytes.data(), "VMCT", 4) == 0);
    CHECK(le32(bytes, 4) == 1);   // version
    CHECK(le32(bytes, 8) == 2);   // width
    CHECK(le32(bytes, 12) == 3);  // height
    CHECK(le32(bytes, 16) == 1);  // slices
    std::int32_t pc;
    std::memcpy(&pc, bytes.data() + 20, 4);
    CHECK(pc == 2);
    float first;
    std::memcpy(&first, bytes.data() + 24, 4);
    CHECK(first == -2.5f);
}

TEST_CASE("vmct: multi-slice round trip is bit exact, including extremes") {
    VmctImage img;
    img.phase_code = 3;
    Rng rng(71);
    for (int s = 0; s < 3; ++s) {
        ImageF slice(33, 17);
        for (auto& v : slice.v) v = static_cast<float>(rng.uniform(kHuMin, kHuMax));
        img.slices.push_back(std::move(slice));
    }
    img.slices[0].v[0] = kHuMin;
    img.slices[0].v[1] = kHuMax;
    img.slices[1].v[0] = -0.0f;
    img.slices[1].v[1] = 1e-42f;  // subnormal survives the container

    const fs::path p = temp_dir() / "rt.vmct";
    write_vmct(p.string(), img);
    const VmctImage back = read_vmct(p.string());

    CHECK(back.phase_code == 3);
    REQUIRE(back.slices.size() == 3);
    for (int s = 0; s < 3; ++s) {
        REQUIRE(back.slices[s].h == 33);
        REQUIRE(back.slices[s].w == 17);
        CHECK(std::memcmp(back.slices[s].v.data(), img.slices[s].v.data(),
                          4 * img.slices[s].v.size()) == 0);
    }
}

TEST_CASE("vmct: unknown phase (-1) round-trips") {
    ImageF img(4, 4, 100.0f);
    const fs::path p = temp_dir() / "unk.vmct";
    write_vmct(p.string(), img, -1);
    CHECK(read_vmct(p.string()).phase_code == -1);
}

TEST_CASE("vmct: writer input validation") {
    const fs::path p = temp_dir() / "bad_write.vmct";
    VmctImage empty;
    CHECK_THROWS_AS(write_vmct(p.string(), empty), ArgumentError);

    VmctImage mismatched;
    mismatched.slices.emplace_back(4, 4);
    mismatched.slices.emplace_back(4, 5);
    CHECK_THROWS_AS(write_vmct(p.string(), mismatched), ShapeError);

    ImageF img(4, 4);
    CHECK_THROWS_AS(write_vmct(p.string(), img, 4), ArgumentError);
    CHECK_THROWS_AS(write_vmct(p.string(), img, -2), ArgumentError);
}

TEST_CASE("vmct: reader rejects corrupted files") {
    ImageF img(4, 4, 50.0f);
    const fs::path good = temp_dir() / "good.vmct";
    write_vmct(good.string(), img, 1);
    const auto bytes = slurp(good);
    const fs::path bad = temp_dir() / "bad.vmct";

    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_vmct((temp_dir() / "absent.vmct").string()), IoError);
    }
    SUBCASE("bad magic") {
        auto v = bytes;
        v[1] = 'X';
        spit(bad, v);
        CHECK_THROWS_AS(read_vmct(bad.string()), FormatError);
    }
    SUBCASE("unsupported version") {
        auto v = bytes;
        v[4] = 2;
        spit(bad, v);
        CHECK_THROWS_AS(read_vmct(bad.string()), FormatError);
    }
    SUBCASE("zero dimension") {
        auto v = bytes;
        v[8] = v[9] = v[10] = v[11] = 0;
        spit(bad, v);
        CHECK_THROWS_AS(read_vmct(bad.string()), FormatError);
    }
    SUBCASE("phase code out of range") {
        auto v = bytes;
        v[20] = 4;
        spit(bad, v);
        CHECK_THROWS_AS(read_vmct(bad.string()), FormatError);
    }
    SUBCASE("trailing byte") {
        auto v = bytes;
        v.push_back(0);
        spit(bad, v);
        CHECK_THROWS_AS(read_vmct(bad.string()), FormatError);
    }
}

TEST_CASE("vmct: every truncation point fails loudly") {
    ImageF img(8, 8);
    Rng rng(72);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform(-1000.0, 1000.0));
    const fs::path good = temp_dir() / "trunc_src.vmct";
    write_vmct(good.string(), img, 0);
    const auto bytes = slurp(good);
    const fs::path bad = temp_dir() / "trunc.vmct";

    int failures = 0;
    const int total = static_cast<int>(bytes.size());
    for (int cut = 0; cut < total; ++cut) {
        spit(bad, std::vector<unsigned char>(bytes.begin(), bytes.begin() + cut));
        try {
            read_vmct(bad.string());
        } catch (const FormatError&) {
            ++failures;
        } catch (const IoError&) {
            ++failures;
        }
    }
    CHECK(failures == total);
}

TEST_CASE("pgm16: exact file bytes for a hand-computed 2x2 export") {
    ImageF img(2, 2);
    img.at(0, 0) = -1.0f;  // below the window -> 0
    img.at(0, 1) = 1.0f;   // above the window -> 65535
    img.at(1, 0) = 0.0f;   // midpoint -> 32768
    img.at(1, 1) = 0.5f;   // 3/4 point -> round(0.75 * 65535) = 49151
    DisplayWindow win;
    win.wl = 0.0f;
    win.ww = 2.0f;

    const fs::path p = temp_dir() / "ref.pgm";
    export_pgm16(p.string(), img, win);

    const std::string header = "P5\n2 2\n65535\n";
    std::vector<unsigned char> expect(header.begin(), header.end());
    for (std::uint16_t px : {std::uint16_t(0), std::uint16_t(65535), std::uint16_t(32768),
                             std::uint16_t(49151)}) {
        expect.push_back(static_cast<unsigned char>(px >> 8));  // big-endian samples
        expect.push_back(static_cast<unsigned char>(px & 0xFF));
    }
    CHECK(slurp(p) == expect);
}

TEST_CASE("pgm16: payload matches apply_window for random images") {
    ImageF img(5, 7);
    Rng rng(73);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform(-1200.0, 1200.0));
    DisplayWindow win;
    win.wl = 40.0f;
    win.ww = 400.0f;

    const fs::path p = temp_dir() / "rand.pgm";
    export_pgm16(p.string(), img, win);
    const auto bytes = slurp(p);

    const std::string header = "P5\n7 5\n65535\n";
    REQUIRE(bytes.size() == header.size() + 2 * img.size());
    CHECK(std::memcmp(bytes.data(), header.data(), header.size()) == 0);
    const auto px = apply_window(img, win);
    for (std::size_t i = 0; i < px.size(); ++i) {
        const std::size_t off = header.size() + 2 * i;
        CHECK(bytes[off] == static_cast<unsigned char>(px[i] >> 8));
        CHECK(bytes[off + 1] == static_cast<unsigned char>(px[i] & 0xFF));
    }
}
