#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hppi/frontend.hpp"
#include "hppi/model_zoo.hpp"
#include "hppi/resources.hpp"

using namespace hppi;

namespace {

GraphSample zero_images() {
  GraphSample s;
  s.slots[static_cast<std::size_t>(InputSlot::Fft)] = Tensor({kWindowLen, kNumChannels});
  s.slots[static_cast<std::size_t>(InputSlot::Wt)] = Tensor({kWindowLen, kNumChannels});
  s.slots[static_cast<std::size_t>(InputSlot::Gt)] = Tensor({kWindowLen, kNumChannels});
  s.label = 0;
  return s;
}

void check_probability_vector(const Tensor& out, std::size_t width) {
  REQUIRE(out.numel() == width);
  double sum = 0.0;
  for (double v : out.data) {
    CHECK(v >= 0.0);
    CHECK(std::isfinite(v));
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("first layer builds and runs on zero input") {
  const ModelGraph g = build_first_layer();
  CHECK(g.num_classes() == 3);
  const Tensor out = forward(g, zero_images());
  check_probability_vector(out, 3);
  const Tensor out2 = forward(g, zero_images());
  CHECK(out.data == out2.data);  // deterministic
  CHECK(macc_of(g) > 0);
}

TEST_CASE("plmn variants have the documented widths") {
  const ModelGraph full = build_plmn(PlmnVariant::Full);
  CHECK(full.nodes[static_cast<std::size_t>(full.find("fuse"))].out_shape ==
        std::vector<std::size_t>{192});
  CHECK(full.num_classes() == 4);
  CHECK(full.find("eca") >= 0);
  CHECK(full.nodes[static_cast<std::size_t>(full.find("eca"))].spec.kernel == 5);
  check_probability_vector(forward(full, zero_images()), 4);

  const ModelGraph na = build_plmn(PlmnVariant::NoAttention);
  CHECK(na.find("eca") < 0);
  check_probability_vector(forward(na, zero_images()), 4);

  const ModelGraph single = build_plmn(PlmnVariant::SingleWt);
  CHECK(single.nodes[static_cast<std::size_t>(single.find("fuse"))].out_shape ==
        std::vector<std::size_t>{64});
  CHECK(single.find("input_fft") < 0);
  check_probability_vector(forward(single, zero_images()), 4);

  const ModelGraph plcn = build_plmn(PlmnVariant::Plcn);
  CHECK(plcn.find("dsc1") < 0);
  CHECK(plcn.find("conv1") >= 0);
  check_probability_vector(forward(plcn, zero_images()), 4);
}

TEST_CASE("plcn variant has more parameters than the full variant") {
  const auto param_count = [](const ModelGraph& g) {
    std::size_t n = 0;
    for (const Node& node : g.nodes)
      for (const Param& p : node.params) n += p.value->numel();
    return n;
  };
  CHECK(param_count(build_plmn(PlmnVariant::Plcn)) >
        param_count(build_plmn(PlmnVariant::Full)));
}

TEST_CASE("stationary shares backbone tensors with the first layer") {
  ModelGraph fl = build_first_layer();
  ModelGraph st = build_stationary(fl);
  CHECK(st.num_classes() == 2);
  check_probability_vector(forward(st, zero_images()), 2);

  // Same tensor object, not an equal copy.
  const int fl_conv = fl.find("conv1");
  const int st_conv = st.find("conv1");
  CHECK(fl.nodes[static_cast<std::size_t>(fl_conv)].params[0].value.get() ==
        st.nodes[static_cast<std::size_t>(st_conv)].params[0].value.get());

  // Mutation through one graph is observed by the other.
  const Tensor before = forward(st, zero_images());
  fl.nodes[static_cast<std::size_t>(fl_conv)].params[1].value->fill(1.0);
  const Tensor after = forward(st, zero_images());
  bool changed = false;
  for (std::size_t i = 0; i < before.numel(); ++i)
    if (before.data[i] != after.data[i]) changed = true;
  CHECK(changed);

  // Both graphs can train the shared backbone; the fresh head is its own.
  CHECK(st.nodes[static_cast<std::size_t>(st_conv)].spec.trainable);
  CHECK(fl.nodes[static_cast<std::size_t>(fl.find("head"))].params[0].value.get() !=
        st.nodes[static_cast<std::size_t>(st.find("head"))].params[0].value.get());
}

TEST_CASE("model file round trip is byte identical") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto p1 = dir / "hppi_zoo_a.hppi";
  const auto p2 = dir / "hppi_zoo_b.hppi";

  const ModelGraph g = build_plmn(PlmnVariant::Full, 77);
  save_model(g, p1);
  const ModelGraph loaded = load_model(p1);
  save_model(loaded, p2);
  CHECK(file_bytes(p1) == file_bytes(p2));

  // Loaded parameters are bit identical, specs equivalent.
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    CHECK(loaded.nodes[i].spec.type == g.nodes[i].spec.type);
    CHECK(loaded.nodes[i].spec.name == g.nodes[i].spec.name);
    CHECK(loaded.nodes[i].spec.inputs == g.nodes[i].spec.inputs);
    for (std::size_t p = 0; p < g.nodes[i].params.size(); ++p)
      CHECK(loaded.nodes[i].params[p].value->data == g.nodes[i].params[p].value->data);
  }
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("model file errors are distinct") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "hppi_zoo_err.hppi";
  save_model(build_first_layer(), path);

  auto bytes = file_bytes(path);
  // Corrupt the magic.
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bad_magic.data()),
             static_cast<std::streamsize>(bad_magic.size()));
  CHECK_THROWS_AS(load_model(path), BadMagicError);

  // Unsupported version.
  auto bad_version = bytes;
  bad_version[4] = 9;
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bad_version.data()),
             static_cast<std::streamsize>(bad_version.size()));
  CHECK_THROWS_AS(load_model(path), UnsupportedVersionError);

  // Truncated payload: declared tensor length outruns the file.
  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(truncated.data()),
             static_cast<std::streamsize>(truncated.size()));
  CHECK_THROWS_AS(load_model(path), TruncatedFileError);

  std::filesystem::remove(path);
}

TEST_CASE("bundle stores shared backbone tensors once") {
  const ModelGraph fl = build_first_layer();
  const ModelGraph st = build_stationary(fl);

  const ModelGraph* pair[2] = {&fl, &st};
  const auto bundle = serialize_models(std::span<const ModelGraph* const>(pair, 2));
  const ModelGraph* single[1] = {&fl};
  const auto fl_only = serialize_models(std::span<const ModelGraph* const>(single, 1));
  const ModelGraph* st_only[1] = {&st};
  const auto st_alone = serialize_models(std::span<const ModelGraph* const>(st_only, 1));

  // The pair is barely larger than one copy: backbone written once, the
  // standalone stationary file materializes it.
  CHECK(bundle.size() < fl_only.size() + st_alone.size() - 1000);
  CHECK(bundle.size() < fl_only.size() + fl_only.size() / 4);

  // Round trip restores two graphs with restored sharing.
  const std::vector<ModelGraph> back = deserialize_models(bundle);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "first_layer");
  CHECK(back[1].name == "stationary");
  CHECK(back[0].nodes[1].params[0].value.get() == back[1].nodes[1].params[0].value.get());
  check_probability_vector(forward(back[1], zero_images()), 2);
}

TEST_CASE("variant names round trip") {
  for (PlmnVariant v : {PlmnVariant::Full, PlmnVariant::NoAttention, PlmnVariant::SingleFft,
                        PlmnVariant::SingleWt, PlmnVariant::SingleGt, PlmnVariant::Plcn})
    CHECK(parse_plmn_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_plmn_variant("bogus"), std::invalid_argument);
}
