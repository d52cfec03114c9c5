#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diffret/rng.hpp"
#include "diffret/tensor.hpp"

namespace diffret {

// Optional affine shift applied to every feature of a generated corpus:
// x -> R x + t with R a QR-orthogonalized Gaussian matrix, plus a factor
// inflating both noise sigmas. Generating a shifted corpus with the same
// seed yields the affine twin of the unshifted one.
struct DomainTransform {
  double translation = 0.5;     // stddev of the random translation vector
  double noise_inflation = 1.5; // multiplies sigma_within and sigma_modal
  std::uint64_t seed = 1;       // stream for drawing R and t
};

struct DomainSpec {
  std::size_t classes = 16;
  std::size_t pairs_per_class = 8;
  std::size_t d_in = 32;
  std::size_t words_per_text = 6;
  std::size_t frames_per_video = 6;
  double sigma_within = 0.3;  // pair-latent spread around the class centroid
  double sigma_modal = 0.3;   // per-token spread around the pair latent
  std::optional<DomainTransform> shift;
};

enum class SplitTag { kNone, kTrain, kTest };

// One text-video pair. Features are stored as float32 row-major matrices
// (words_per_text x d_in and frames_per_video x d_in) so file round-trips
// are bit-exact.
struct CorpusItem {
  std::uint64_t id = 0;  // stable across permutation and splitting
  std::uint64_t class_label = 0;
  SplitTag split = SplitTag::kNone;
  std::vector<float> text;
  std::vector<float> video;
};

struct Corpus {
  std::size_t d_in = 0;
  std::size_t words_per_text = 0;
  std::size_t frames_per_video = 0;
  std::uint64_t seed = 0;
  std::string spec_echo;  // JSON of the generating DomainSpec ("" if imported)
  std::vector<CorpusItem> items;

  Tensor text_tokens(std::size_t index) const;   // words x d_in, as doubles
  Tensor video_tokens(std::size_t index) const;  // frames x d_in
  std::size_t size() const { return items.size(); }
};

// Latent-class generator: class centroid ~ N(0, I); each pair shares one
// latent = centroid + N(0, sigma_within^2); each token adds N(0,
// sigma_modal^2). Deterministic per (spec, seed).
Corpus generate(const DomainSpec& spec, std::uint64_t seed);

// DFCX container: magic, version, length-prefixed JSON manifest, then two
// named f32 tensors per item. Round-trips bit-exactly.
void save(const Corpus& corpus, const std::string& path);
Corpus load(const std::string& path);

// Pair-respecting random split; both sides nonempty or config error.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction, std::uint64_t seed);

// Marks each item in place with the split it would land in.
void tag_split(Corpus& corpus, double train_fraction, std::uint64_t seed);
Corpus filter_split(const Corpus& corpus, SplitTag tag);

// Imports a directory of text_<i>.csv / video_<i>.csv matrices (one token
// per row, comma-separated features).
Corpus import_csv_dir(const std::string& dir);

std::string to_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const std::string& json_text);

}  // namespace diffret
