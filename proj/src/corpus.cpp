#include "diffret/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "diffret/error.hpp"
#include "diffret/serialize.hpp"
#include "json.hpp"

namespace diffret {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'C', 'X'};
constexpr std::uint32_t kVersion = 1;

void validate_spec(const DomainSpec& spec) {
  if (spec.classes < 2) throw ConfigError("corpus spec: need at least 2 classes");
  if (spec.pairs_per_class < 1) throw ConfigError("corpus spec: need at least 1 pair per class");
  if (spec.d_in < 1) throw ConfigError("corpus spec: d_in must be positive");
  if (spec.words_per_text < 1 || spec.frames_per_video < 1) {
    throw ConfigError("corpus spec: token counts must be positive");
  }
  if (spec.sigma_within < 0.0 || spec.sigma_modal < 0.0) {
    throw ConfigError("corpus spec: sigmas must be nonnegative");
  }
  if (spec.shift) {
    if (spec.shift->translation < 0.0) throw ConfigError("corpus spec: negative translation");
    if (!(spec.shift->noise_inflation > 0.0)) {
      throw ConfigError("corpus spec: noise inflation must be positive");
    }
  }
}

// Modified Gram-Schmidt orthogonalization of a Gaussian matrix: a uniformly
// "rotation-like" orthogonal transform.
std::vector<double> orthogonal_matrix(std::size_t d, SeededRng& rng) {
  std::vector<double> m(d * d);
  for (double& v : m) v = rng.normal();
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t prev = 0; prev < c; ++prev) {
      double proj = 0.0;
      for (std::size_t r = 0; r < d; ++r) proj += m[r * d + c] * m[r * d + prev];
      for (std::size_t r = 0; r < d; ++r) m[r * d + c] -= proj * m[r * d + prev];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < d; ++r) norm += m[r * d + c] * m[r * d + c];
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw NumericError("degenerate transform draw");
    for (std::size_t r = 0; r < d; ++r) m[r * d + c] /= norm;
  }
  return m;
}

}  // namespace

Tensor Corpus::text_tokens(std::size_t index) const {
  if (index >= items.size()) throw ContractError("corpus: item index out of range");
  const CorpusItem& item = items[index];
  std::vector<double> v(item.text.begin(), item.text.end());
  return Tensor({words_per_text, d_in}, std::move(v));
}

Tensor Corpus::video_tokens(std::size_t index) const {
  if (index >= items.size()) throw ContractError("corpus: item index out of range");
  const CorpusItem& item = items[index];
  std::vector<double> v(item.video.begin(), item.video.end());
  return Tensor({frames_per_video, d_in}, std::move(v));
}

Corpus generate(const DomainSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  const std::size_t d = spec.d_in;
  const double inflate = spec.shift ? spec.shift->noise_inflation : 1.0;
  const double sw = spec.sigma_within * inflate;
  const double sm = spec.sigma_modal * inflate;

  std::vector<double> rot;
  std::vector<double> trans;
  if (spec.shift) {
    SeededRng shift_rng(spec.shift->seed);
    rot = orthogonal_matrix(d, shift_rng);
    trans.resize(d);
    for (double& v : trans) v = spec.shift->translation * shift_rng.normal();
  }
  auto transform = [&](std::vector<double>& token) {
    if (!spec.shift) return;
    std::vector<double> out(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) out[r] += rot[r * d + c] * token[c];
      out[r] += trans[r];
    }
    token = std::move(out);
  };

  SeededRng rng(seed);
  Corpus corpus;
  corpus.d_in = d;
  corpus.words_per_text = spec.words_per_text;
  corpus.frames_per_video = spec.frames_per_video;
  corpus.seed = seed;
  corpus.spec_echo = to_json(spec);
  corpus.items.reserve(spec.classes * spec.pairs_per_class);

  std::vector<double> centroid(d), latent(d), token(d);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t j = 0; j < d; ++j) centroid[j] = rng.normal();
    for (std::size_t p = 0; p < spec.pairs_per_class; ++p) {
      CorpusItem item;
      item.id = static_cast<std::uint64_t>(c) * spec.pairs_per_class + p;
      item.class_label = c;
      for (std::size_t j = 0; j < d; ++j) latent[j] = centroid[j] + sw * rng.normal();
      auto emit = [&](std::vector<float>& dst, std::size_t count) {
        dst.reserve(count * d);
        for (std::size_t t = 0; t < count; ++t) {
          for (std::size_t j = 0; j < d; ++j) token[j] = latent[j] + sm * rng.normal();
          transform(token);
          for (std::size_t j = 0; j < d; ++j) dst.push_back(static_cast<float>(token[j]));
        }
      };
      emit(item.text, spec.words_per_text);
      emit(item.video, spec.frames_per_video);
      corpus.items.push_back(std::move(item));
    }
  }
  return corpus;
}

namespace {

const char* split_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kTest: return "test";
    default: return "none";
  }
}

SplitTag split_from_name(const std::string& s) {
  if (s == "train") return SplitTag::kTrain;
  if (s == "test") return SplitTag::kTest;
  if (s == "none") return SplitTag::kNone;
  throw IoError("corpus manifest: unknown split label: " + s);
}

std::string item_tensor_name(std::uint64_t id, const char* part) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "item%06llu/%s", static_cast<unsigned long long>(id), part);
  return buf;
}

}  // namespace

void save(const Corpus& corpus, const std::string& path) {
  if (corpus.items.empty()) throw InputError("save: empty corpus");
  nlohmann::json manifest;
  manifest["items"] = corpus.items.size();
  manifest["d_in"] = corpus.d_in;
  manifest["words_per_text"] = corpus.words_per_text;
  manifest["frames_per_video"] = corpus.frames_per_video;
  manifest["seed"] = corpus.seed;
  manifest["spec"] =
      corpus.spec_echo.empty() ? nlohmann::json() : nlohmann::json::parse(corpus.spec_echo);
  auto& pairs = manifest["pairs"] = nlohmann::json::array();
  auto& classes = manifest["classes"] = nlohmann::json::array();
  auto& splits = manifest["splits"] = nlohmann::json::array();
  for (const CorpusItem& item : corpus.items) {
    pairs.push_back({item.id, item.id});  // text id <-> video id
    classes.push_back(item.class_label);
    splits.push_back(split_name(item.split));
  }

  // Offsets are relative to the start of the tensor section (just after the
  // manifest), so the manifest length does not feed back into them.
  std::vector<std::uint64_t> offsets;
  offsets.reserve(corpus.items.size());
  std::ostringstream body(std::ios::binary);
  for (const CorpusItem& item : corpus.items) {
    offsets.push_back(static_cast<std::uint64_t>(body.tellp()));
    io::write_named_f32(body, item_tensor_name(item.id, "text"),
                        {corpus.words_per_text, corpus.d_in}, item.text);
    io::write_named_f32(body, item_tensor_name(item.id, "video"),
                        {corpus.frames_per_video, corpus.d_in}, item.video);
  }
  manifest["offsets"] = offsets;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  io::write_u32(out, kVersion);
  io::write_string(out, manifest.dump());
  const std::string& payload = body.str();
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path);
}

Corpus load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a corpus file (bad magic): " + path);
  }
  const std::uint32_t version = io::read_u32(in);
  if (version != kVersion) {
    throw IoError("unsupported corpus version " + std::to_string(version));
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corpus manifest parse error: ") + e.what());
  }

  Corpus corpus;
  try {
    corpus.d_in = manifest.at("d_in").get<std::size_t>();
    corpus.words_per_text = manifest.at("words_per_text").get<std::size_t>();
    corpus.frames_per_video = manifest.at("frames_per_video").get<std::size_t>();
    corpus.seed = manifest.at("seed").get<std::uint64_t>();
    if (!manifest.at("spec").is_null()) corpus.spec_echo = manifest.at("spec").dump();
    const std::size_t count = manifest.at("items").get<std::size_t>();
    const auto& pairs = manifest.at("pairs");
    const auto& classes = manifest.at("classes");
    const auto& splits = manifest.at("splits");
    const auto& offsets = manifest.at("offsets");
    if (pairs.size() != count || classes.size() != count || splits.size() != count ||
        offsets.size() != count) {
      throw IoError("corpus manifest: inconsistent item counts");
    }
    corpus.items.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      corpus.items[i].id = pairs[i][0].get<std::uint64_t>();
      if (pairs[i][1].get<std::uint64_t>() != corpus.items[i].id) {
        throw IoError("corpus manifest: pairing is not the identity bijection");
      }
      corpus.items[i].class_label = classes[i].get<std::uint64_t>();
      corpus.items[i].split = split_from_name(splits[i].get<std::string>());
    }
    const std::streampos body_start = in.tellg();
    for (std::size_t i = 0; i < count; ++i) {
      const auto expected = static_cast<std::uint64_t>(in.tellg() - body_start);
      if (offsets[i].get<std::uint64_t>() != expected) {
        throw IoError("corpus manifest: offset table mismatch");
      }
      io::NamedF32 text = io::read_named_f32(in);
      io::NamedF32 video = io::read_named_f32(in);
      if (text.name != item_tensor_name(corpus.items[i].id, "text") ||
          video.name != item_tensor_name(corpus.items[i].id, "video")) {
        throw IoError("corpus payload: tensor name mismatch");
      }
      if (text.shape != Shape{corpus.words_per_text, corpus.d_in} ||
          video.shape != Shape{corpus.frames_per_video, corpus.d_in}) {
        throw IoError("corpus payload: tensor shape mismatch");
      }
      corpus.items[i].text = std::move(text.values);
      corpus.items[i].video = std::move(video.values);
    }
    if (!io::at_eof(in)) throw IoError("corpus payload: trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corpus manifest field error: ") + e.what());
  }
  return corpus;
}

void tag_split(Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: fraction must lie in (0,1)");
  }
  const std::size_t n = corpus.items.size();
  if (n < 2) throw ConfigError("split: need at least 2 pairs");
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) throw ConfigError("split: fraction leaves an empty side");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SeededRng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(order[i], order[j]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    corpus.items[order[i]].split = i < n_train ? SplitTag::kTrain : SplitTag::kTest;
  }
}

Corpus filter_split(const Corpus& corpus, SplitTag tag) {
  Corpus out = corpus;
  out.items.clear();
  for (const CorpusItem& item : corpus.items) {
    if (item.split == tag) out.items.push_back(item);
  }
  return out;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  Corpus tagged = corpus;
  tag_split(tagged, train_fraction, seed);
  return {filter_split(tagged, SplitTag::kTrain), filter_split(tagged, SplitTag::kTest)};
}

namespace {

std::vector<std::vector<float>> read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<float> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stof(cell));
      } catch (const std::exception&) {
        throw InputError("bad CSV value '" + cell + "' in " + path);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError("ragged CSV rows in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("empty CSV: " + path);
  return rows;
}

}  // namespace

Corpus import_csv_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  Corpus corpus;
  for (std::size_t i = 0;; ++i) {
    const fs::path text_path = fs::path(dir) / ("text_" + std::to_string(i) + ".csv");
    const fs::path video_path = fs::path(dir) / ("video_" + std::to_string(i) + ".csv");
    if (!fs::exists(text_path)) {
      if (fs::exists(video_path)) throw InputError("unpaired file: " + video_path.string());
      break;
    }
    if (!fs::exists(video_path)) throw InputError("unpaired file: " + text_path.string());
    auto text = read_csv_matrix(text_path.string());
    auto video = read_csv_matrix(video_path.string());
    if (i == 0) {
      corpus.d_in = text.front().size();
      corpus.words_per_text = text.size();
      corpus.frames_per_video = video.size();
    }
    if (text.front().size() != corpus.d_in || video.front().size() != corpus.d_in ||
        text.size() != corpus.words_per_text || video.size() != corpus.frames_per_video) {
      throw InputError("inconsistent CSV shapes at pair " + std::to_string(i));
    }
    CorpusItem item;
    item.id = i;
    item.class_label = i;
    for (const auto& row : text) item.text.insert(item.text.end(), row.begin(), row.end());
    for (const auto& row : video) item.video.insert(item.video.end(), row.begin(), row.end());
    corpus.items.push_back(std::move(item));
  }
  if (corpus.items.empty()) {
    throw InputError("no text_<i>.csv / video_<i>.csv pairs found in " + dir);
  }
  return corpus;
}

std::string to_json(const DomainSpec& spec) {
  nlohmann::json j;
  j["classes"] = spec.classes;
  j["pairs_per_class"] = spec.pairs_per_class;
  j["d_in"] = spec.d_in;
  j["words_per_text"] = spec.words_per_text;
  j["frames_per_video"] = spec.frames_per_video;
  j["sigma_within"] = spec.sigma_within;
  j["sigma_modal"] = spec.sigma_modal;
  if (spec.shift) {
    j["shift"] = {{"translation", spec.shift->translation},
                  {"noise_inflation", spec.shift->noise_inflation},
                  {"seed", spec.shift->seed}};
  }
  return j.dump();
}

DomainSpec domain_spec_from_json(const std::string& json_text) {
  DomainSpec spec;
  try {
    const nlohmann::json j = nlohmann::json::parse(json_text);
    spec.classes = j.at("classes").get<std::size_t>();
    spec.pairs_per_class = j.at("pairs_per_class").get<std::size_t>();
    spec.d_in = j.at("d_in").get<std::size_t>();
    spec.words_per_text = j.at("words_per_text").get<std::size_t>();
    spec.frames_per_video = j.at("frames_per_video").get<std::size_t>();
    spec.sigma_within = j.at("sigma_within").get<double>();
    spec.sigma_modal = j.at("sigma_modal").get<double>();
    if (j.contains("shift")) {
      DomainTransform t;
      t.translation = j["shift"].at("translation").get<double>();
      t.noise_inflation = j["shift"].at("noise_inflation").get<double>();
      t.seed = j["shift"].at("seed").get<std::uint64_t>();
      spec.shift = t;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad domain spec: ") + e.what());
  }
  return spec;
}

}  // namespace diffret
