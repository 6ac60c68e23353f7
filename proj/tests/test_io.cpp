#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <unistd.h>

#include "rrid/checkpoint.hpp"
#include "rrid/config.hpp"
#include "rrid/embeddings.hpp"
#include "rrid/feature_io.hpp"
#include "rrid/manifest.hpp"
#include "rrid/rng.hpp"
#include "rrid/synth.hpp"

using namespace rrid;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rrid_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

long long offset_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.offset();
  }
  return -2;
}

}  // namespace

TEST_CASE("RIDF round trip is bit-identical") {
  Rng rng(1);
  FeatureMap m(24, 8, 2048);
  for (auto& v : m.values) v = static_cast<float>(rng.normal());
  m.values[5] = -0.0f;
  const std::string bytes = encode_feature(m);
  CHECK(bytes.size() == 20 + 4 * 24 * 8 * 2048);
  CHECK(bytes.substr(0, 4) == "RIDF");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version, little-endian
  const FeatureMap back = decode_feature(bytes);
  CHECK(back.height == 24);
  CHECK(back.width == 8);
  CHECK(back.channels == 2048);
  CHECK(std::memcmp(back.values.data(), m.values.data(), m.values.size() * 4) == 0);

  TempDir dir("ridf");
  write_feature(dir.path / "a.ridf", m);
  CHECK(slurp(dir.path / "a.ridf") == bytes);
  CHECK(read_feature(dir.path / "a.ridf") == m);
}

TEST_CASE("RIDF corruptions are located") {
  FeatureMap m(6, 2, 3, 1.5f);
  const std::string good = encode_feature(m);
  CHECK(offset_of([&] { decode_feature(good.substr(0, good.size() - 3)); }) == 20);
  std::string magic = good;
  magic[1] = 'X';
  CHECK(offset_of([&] { decode_feature(magic); }) == 0);
  std::string version = good;
  version[4] = 2;
  CHECK(offset_of([&] { decode_feature(version); }) == 4);
  CHECK(offset_of([&] { decode_feature(good.substr(0, 10)); }) == 8);
  CHECK(offset_of([&] { decode_feature(good + "x"); }) == static_cast<long long>(good.size()));
  std::string huge = good;
  for (int i = 16; i < 20; ++i) huge[i] = '\xff';
  CHECK(offset_of([&] { decode_feature(huge); }) == 20);
  m.values[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(encode_feature(m), DataError);
  CHECK_THROWS_AS(read_feature("/nonexistent/x.ridf"), DataError);
}

TEST_CASE("RIDC round trip and corruptions") {
  Checkpoint c;
  c.params.add("a.weight", Tensor::matrix({{1, 2}, {3, -4.5f}}));
  c.params.add("a.bn.running_var", Tensor::vector({0.25f}), false);
  c.params.add("scalar", Tensor({}, std::vector<float>{7.0f}));
  c.config = {{"run", {{"epochs", 3}}}, {"num_classes", 2}};
  c.epoch = 3;
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.params.size() == 3);
  CHECK(back.params[0].value == c.params[0].value);
  CHECK(back.params[1].name == "a.bn.running_var");
  CHECK_FALSE(back.params[1].trainable);
  CHECK(back.params[0].trainable);
  CHECK(back.params[2].value.rank() == 0);
  CHECK(back.config == c.config);
  CHECK(back.epoch == 3);
  CHECK(encode_checkpoint(back) == bytes);

  CHECK(offset_of([&] { decode_checkpoint("RIDF" + bytes.substr(4)); }) == 0);
  CHECK(offset_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 1)); }) ==
        static_cast<long long>(bytes.size() - 4));
  CHECK(offset_of([&] { decode_checkpoint(bytes.substr(0, 30)); }) >= 12);
  std::string bad_json = bytes;
  bad_json[bytes.size() - 6] = '{';
  CHECK_THROWS_AS(decode_checkpoint(bad_json), FormatError);
}

TEST_CASE("RIDE round trip with sidecar") {
  TempDir dir("ride");
  EmbeddingSet s;
  s.split = "query";
  s.ids = {"a", "b"};
  s.matrix = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  s.person_ids = {3, -1};
  s.camera_ids = {0, 1};
  s.config = {{"embed_dim", 3}};
  write_embeddings(dir.path / "q.ride", s);
  CHECK(fs::exists(dir.path / "q.ride.meta.json"));
  const std::string bytes = slurp(dir.path / "q.ride");
  CHECK(bytes.size() == 12 + 24);
  const auto back = read_embeddings(dir.path / "q.ride");
  CHECK(back.matrix == s.matrix);
  CHECK(back.ids == s.ids);
  CHECK(back.person_ids == s.person_ids);
  CHECK(back.config == s.config);
  CHECK(offset_of([&] { decode_embedding_matrix(bytes.substr(0, 20)); }) == 12);
  s.person_ids.pop_back();
  CHECK_THROWS_AS(write_embeddings(dir.path / "bad.ride", s), DimensionError);
}

TEST_CASE("manifest parsing") {
  const std::string three =
      R"({"id":"a","feature_path":"x.ridf","person_id":7,"camera_id":0,"split":"train"})"
      "\n"
      R"({"id":"b","feature_path":"y.ridf","person_id":42,"camera_id":1,"split":"train"})"
      "\n\n"
      R"({"id":"c","feature_path":"z.ridf","person_id":-1,"camera_id":1,"split":"gallery"})"
      "\n";
  const Manifest m = parse_manifest(three, "/data", false);
  CHECK(m.entries.size() == 3);
  CHECK(m.train_labels.at(7) == 0);
  CHECK(m.train_labels.at(42) == 1);
  CHECK(m.count(Split::gallery) == 1);
  CHECK(m.resolve(m.entries[0]) == fs::path("/data/x.ridf"));

  auto error_of = [](const std::string& text) {
    try {
      parse_manifest(text, ".", false);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const std::string dup =
      three + R"({"id":"b","feature_path":"w.ridf","person_id":1,"camera_id":0,"split":"query"})";
  CHECK(error_of(dup).find("line 5") != std::string::npos);
  CHECK(error_of(dup).find("duplicate id 'b'") != std::string::npos);
  CHECK(error_of(R"({"id":"a","feature_path":"x","person_id":1,"camera_id":0,"split":"test"})")
            .find("line 1") != std::string::npos);
  CHECK(error_of(R"({"id":"a","feature_path":"x","person_id":"1","camera_id":0,"split":"query"})")
            .find("person_id") != std::string::npos);
  CHECK(error_of(R"({"id":"a","feature_path":"x","person_id":-1,"camera_id":0,"split":"train"})")
            .find("junk") != std::string::npos);
  CHECK(error_of("{not json").find("line 1") != std::string::npos);
  try {
    parse_manifest(three, "/nonexistent-dir", true);
    FAIL("missing file accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("synthetic generator") {
  SynthSpec spec;
  spec.n_ids = 4;
  spec.n_eval_ids = 2;
  spec.imgs_per_id = 5;
  spec.channels = 8;
  spec.seed = 7;
  const auto images = synth_images(spec);
  CHECK(images.size() == 6 * 5);
  std::size_t train = 0, query = 0, gallery = 0;
  for (const auto& img : images) {
    CHECK(img.map.height == 12);
    CHECK(img.map.width == 4);
    CHECK(img.map.channels == 8);
    train += img.entry.split == Split::train;
    query += img.entry.split == Split::query;
    gallery += img.entry.split == Split::gallery;
  }
  CHECK(train == 4 * 3);
  CHECK(query == 2);
  CHECK(gallery == 4 * 2 + 2 * 4);
  // each query has a cross-camera match
  for (const auto& q : images) {
    if (q.entry.split != Split::query) continue;
    bool cross = false;
    for (const auto& g : images) {
      cross = cross || (g.entry.split == Split::gallery && g.entry.person_id == q.entry.person_id &&
                        g.entry.camera_id != q.entry.camera_id);
    }
    CHECK(cross);
  }

  TempDir a("synth_a"), b("synth_b");
  const auto ma = synth_generate(spec, a.path / "d");
  synth_generate(spec, b.path / "d");
  CHECK(slurp(ma) == slurp(b.path / "d" / "manifest.jsonl"));
  for (const auto& img : images) {
    CHECK(slurp(a.path / "d" / img.entry.feature_path) ==
          slurp(b.path / "d" / img.entry.feature_path));
  }
  const Manifest m = load_manifest(ma);
  CHECK(m.entries.size() == images.size());
  CHECK_THROWS_AS(synth_generate(spec, a.path / "d"), DataError);
  synth_generate(spec, a.path / "d", true);

  SynthSpec one = spec;
  one.n_ids = 1;
  CHECK_NOTHROW(synth_images(one));
  SynthSpec bad = spec;
  bad.height = 8;
  CHECK_THROWS_AS(synth_images(bad), ConfigError);
  bad = spec;
  bad.clutter_row_prob = 1.5;
  CHECK_THROWS_AS(synth_images(bad), ConfigError);
}

TEST_CASE("run configuration") {
  const RunConfig d = parse_config(json::object());
  CHECK(d.head.channels == 2048);
  CHECK(d.head.embed_dim == 256);
  CHECK(d.head.scales == std::vector<std::size_t>{6});
  CHECK(d.train.lambda == 2.0);
  CHECK(d.train.n_k == 16);
  CHECK(d.train.n_m == 4);
  CHECK(d.train.momentum == 0.9);
  CHECK(d.train.weight_decay == 5e-4);
  CHECK(d.train.base_lr_head == 1e-2);
  CHECK(d.train.epochs == 80);

  CHECK(parse_config(json{{"lambda", 0}}).train.lambda == 0.0);
  const RunConfig five = parse_config(json{{"parts", 5}});
  CHECK(five.head.scales == std::vector<std::size_t>{5});
  CHECK_THROWS_AS(five.head.validate_for_height(24), ConfigError);

  auto error_of = [](const json& j) {
    try {
      parse_config(j);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error_of(json{{"epochz", 3}}).find("/epochz") != std::string::npos);
  CHECK(error_of(json{{"epochs", "3"}}).find("/epochs") != std::string::npos);
  CHECK(error_of(json{{"scales", {2, "x"}}}).find("/scales/1") != std::string::npos);
  CHECK(error_of(json{{"global_mode", "max"}}).find("/global_mode") != std::string::npos);
  CHECK(error_of(json{{"N_K", -1}}).find("/N_K") != std::string::npos);
  CHECK(error_of(json{{"parts", 6}, {"scales", {6}}}) != "");
  CHECK(error_of(json::array()) != "");

  RunConfig r = parse_config(json{{"scales", {2, 4, 6}}, {"global_mode", "gap+gmp"}, {"seed", 9}});
  const RunConfig again = parse_config(json::parse(r.to_json().dump()));
  CHECK(again.to_json() == r.to_json());
}

TEST_CASE("every truncation and header corruption is rejected with a location") {
  FeatureMap m(6, 2, 3, 0.5f);
  Checkpoint c;
  c.params.add("w", Tensor::matrix({{1, 2}}));
  c.params.add("bn.running_mean", Tensor::vector({0}), false);
  c.config = {{"k", 1}};
  c.epoch = 2;
  struct Format {
    const char* name;
    std::string bytes;
    std::size_t header;
    std::function<void(std::string_view)> decode;
  };
  const std::vector<Format> formats{
      {"RIDF", encode_feature(m), 20, [](std::string_view b) { decode_feature(b); }},
      {"RIDC", encode_checkpoint(c), 12, [](std::string_view b) { decode_checkpoint(b); }},
      {"RIDE", encode_embedding_matrix(Tensor::matrix({{1, 2}, {3, 4}})), 12,
       [](std::string_view b) { decode_embedding_matrix(b); }},
  };
  for (const auto& f : formats) {
    INFO(f.name);
    for (std::size_t n = 0; n < f.bytes.size(); ++n) {
      const long long at = offset_of([&] { f.decode(std::string_view(f.bytes).substr(0, n)); });
      CHECK(at >= 0);
      CHECK(at <= static_cast<long long>(n));
    }
    // magic, version and size fields: every single-byte change is caught
    for (std::size_t i = 0; i < f.header; ++i) {
      std::string bad = f.bytes;
      bad[i] = static_cast<char>(bad[i] ^ 0x40);
      const long long at = offset_of([&] { f.decode(bad); });
      CHECK(at >= 0);
    }
  }
}
