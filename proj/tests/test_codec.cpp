#include <catch_amalgamated.hpp>

#include <filesystem>

#include "dvp/codec.hpp"
#include "dvp/error.hpp"

using namespace dvp;
namespace fs = std::filesystem;

TEST_CASE("sha256 matches the FIPS 180-2 test vectors") {
  CHECK(to_hex(sha256(std::string_view("abc"))) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(to_hex(sha256(std::string_view(""))) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("hex round trip and rejection") {
  std::vector<std::uint8_t> bytes = {0x00, 0x7f, 0x80, 0xff};
  CHECK(to_hex(bytes) == "007f80ff");
  CHECK(from_hex("007F80ff") == bytes);
  CHECK_THROWS_AS(from_hex("abc"), Error);
  CHECK_THROWS_AS(from_hex("zz"), Error);
}

TEST_CASE("base64 round trip at every padding length") {
  CHECK(base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}) == "Zm9vYg==");
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 11);
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
}

TEST_CASE("SplitMix64 reproduces the reference stream") {
  // First outputs of the reference C implementation seeded with 1234567.
  SplitMix64 rng(1234567);
  CHECK(rng.next() == 6457827717110365317ULL);
  CHECK(rng.next() == 3203168211198807973ULL);
  CHECK(rng.next() == 9817491932198370423ULL);
  SplitMix64 u(9);
  for (int i = 0; i < 1000; ++i) {
    double v = u.next_signed_unit();
    CHECK(v >= -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("atomic writes replace whole files") {
  fs::path dir = fs::temp_directory_path() / "dvp_codec_test";
  fs::remove_all(dir);
  const std::string path = (dir / "nested" / "f.txt").string();
  write_file_atomic(path, std::string_view("first"));
  write_file_atomic(path, std::string_view("second"));
  auto bytes = read_file(path);
  CHECK(std::string(bytes.begin(), bytes.end()) == "second");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "nested")) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
  CHECK_THROWS_AS(read_file((dir / "missing").string()), Error);
  fs::remove_all(dir);
}
