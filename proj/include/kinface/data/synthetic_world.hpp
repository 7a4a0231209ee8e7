#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "kinface/caae/model.hpp"
#include "kinface/data/datasets.hpp"
#include "kinface/dnanet/selection.hpp"

namespace kinface::data {

struct SyntheticWorldConfig {
  std::size_t true_gene_dim = 8;
  std::size_t image_side = 32;
  std::uint64_t seed = 0;
  // Scale of the age/gender contribution relative to the genes.
  double label_strength = 0.5;
};

/**
 * Known-ground-truth face generator.
 *
 * A fixed seeded dense map takes (true genes, encoded label) to one value
 * per pixel channel, followed by tanh and a 3x3 binomial smoothing filter.
 * Each weight column is a coarse random field bilinearly upsampled to the
 * image, so faces vary smoothly in space.
 */
class SyntheticWorld {
 public:
  explicit SyntheticWorld(SyntheticWorldConfig config) : config_(config) {
    if (config_.true_gene_dim == 0) throw std::invalid_argument("true_gene_dim must be positive");
    if (!caae::CaaeConfig::is_power_of_two(config_.image_side) || config_.image_side < 8)
      throw std::invalid_argument("synthetic image_side must be a power of two >= 8");
    SeededRng rng(config_.seed);
    gene_fields_.reserve(config_.true_gene_dim);
    for (std::size_t j = 0; j < config_.true_gene_dim; ++j) gene_fields_.push_back(random_field(rng, 1.0));
    for (std::size_t k = 0; k < caae::kLabelDim; ++k) label_fields_.push_back(random_field(rng, 1.0));
    bias_ = random_field(rng, 0.3);
  }

  const SyntheticWorldConfig& config() const { return config_; }
  std::size_t gene_dim() const { return config_.true_gene_dim; }
  std::size_t image_side() const { return config_.image_side; }

  caae::FaceImage<float> render(const Tensor<double>& genes, const caae::ConditionLabel& label) const {
    if (genes.size() != config_.true_gene_dim) throw ShapeError("render: gene vector has wrong length");
    const std::size_t S = config_.image_side, n = S * S * 3;
    std::vector<double> act(bias_);
    for (std::size_t j = 0; j < genes.size(); ++j) {
      const double g = genes[j];
      const auto& f = gene_fields_[j];
      for (std::size_t p = 0; p < n; ++p) act[p] += g * f[p];
    }
    const auto l = label.encoded<double>();
    for (std::size_t k = 0; k < l.size(); ++k) {
      if (l[k] == 0.0) continue;
      const auto& f = label_fields_[k];
      for (std::size_t p = 0; p < n; ++p) act[p] += config_.label_strength * l[k] * f[p];
    }
    for (auto& v : act) v = std::tanh(v);

    static constexpr double kTap[3] = {1.0, 2.0, 1.0};
    caae::FaceImage<float> img{Tensor<float>({S, S, 3})};
    const auto side = static_cast<std::ptrdiff_t>(S);
    for (std::ptrdiff_t y = 0; y < side; ++y)
      for (std::ptrdiff_t x = 0; x < side; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          double acc = 0.0, wsum = 0.0;
          for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
            for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
              const std::ptrdiff_t yy = y + dy, xx = x + dx;
              if (yy < 0 || xx < 0 || yy >= side || xx >= side) continue;
              const double w = kTap[dy + 1] * kTap[dx + 1];
              acc += w * act[static_cast<std::size_t>((yy * side + xx) * 3) + c];
              wsum += w;
            }
          img.pixels[static_cast<std::size_t>((y * side + x) * 3) + c] = static_cast<float>(acc / wsum);
        }
    return img;
  }

 private:
  // Coarse U(-amp, amp) grid per channel, bilinearly upsampled to S x S, HWC.
  std::vector<double> random_field(SeededRng& rng, double amp) const {
    const std::size_t S = config_.image_side;
    const std::size_t coarse = std::max<std::size_t>(2, S / 4);
    std::vector<double> grid(coarse * coarse * 3);
    for (auto& v : grid) v = rng.uniform(-amp, amp);
    std::vector<double> out(S * S * 3);
    const double scale = static_cast<double>(coarse - 1) / static_cast<double>(S - 1);
    for (std::size_t y = 0; y < S; ++y) {
      const double gy = static_cast<double>(y) * scale;
      const std::size_t y0 = std::min(static_cast<std::size_t>(gy), coarse - 2);
      const double ty = gy - static_cast<double>(y0);
      for (std::size_t x = 0; x < S; ++x) {
        const double gx = static_cast<double>(x) * scale;
        const std::size_t x0 = std::min(static_cast<std::size_t>(gx), coarse - 2);
        const double tx = gx - static_cast<double>(x0);
        for (std::size_t c = 0; c < 3; ++c) {
          auto at = [&](std::size_t yy, std::size_t xx) { return grid[(yy * coarse + xx) * 3 + c]; };
          out[(y * S + x) * 3 + c] = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                                     ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
        }
      }
    }
    return out;
  }

  SyntheticWorldConfig config_;
  std::vector<std::vector<double>> gene_fields_;
  std::vector<std::vector<double>> label_fields_;
  std::vector<double> bias_;
};

struct SyntheticPerson {
  Tensor<double> genes;
  int age_years = 0;
  int gender = 0;
  caae::FaceImage<float> image;

  caae::ConditionLabel label() const { return caae::encode_label(age_years, gender); }
};

struct SyntheticFamily {
  SyntheticPerson father, mother, child;
  dnanet::SelectionMask mask;  // 1 = gene taken from the father
};

inline Tensor<double> sample_true_genes(std::size_t dim, SeededRng& rng) {
  Tensor<double> g({dim});
  for (auto& v : g.data()) v = rng.uniform(-1.0, 1.0);
  return g;
}

/**
 * One family: parents draw genes uniformly on [-1, 1]^d, the child takes
 * each gene from one parent under a Bernoulli(0.5) mask, and all three are
 * rendered by the same world.
 */
inline SyntheticFamily synth_family(const SyntheticWorld& world, SeededRng& rng) {
  SyntheticFamily fam;
  const std::size_t d = world.gene_dim();
  fam.father.genes = sample_true_genes(d, rng);
  fam.mother.genes = sample_true_genes(d, rng);
  fam.mask = dnanet::sample_mask(d, rng);
  fam.child.genes = dnanet::select_mask(fam.father.genes, fam.mother.genes, fam.mask);
  fam.father.age_years = 25 + static_cast<int>(rng.index(36));
  fam.mother.age_years = 25 + static_cast<int>(rng.index(36));
  fam.child.age_years = 3 + static_cast<int>(rng.index(38));
  fam.father.gender = 0;
  fam.mother.gender = 1;
  fam.child.gender = rng.bernoulli(0.5) ? 1 : 0;
  for (auto* p : {&fam.father, &fam.mother, &fam.child}) p->image = world.render(p->genes, p->label());
  return fam;
}

/// Families with ids "fam00000", ... assigned to train/test by the id hash,
/// generating until both quotas are filled; overflow families are dropped.
struct SyntheticFamilySet {
  std::vector<std::string> train_ids, test_ids;
  std::vector<SyntheticFamily> train, test;
};

inline std::string synthetic_family_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fam%05zu", i);
  return buf;
}

inline SyntheticFamilySet synth_family_set(const SyntheticWorld& world, std::size_t train_count,
                                           std::size_t test_count, SeededRng& rng) {
  SyntheticFamilySet set;
  for (std::size_t i = 0; set.train.size() < train_count || set.test.size() < test_count; ++i) {
    const std::string id = synthetic_family_id(i);
    SyntheticFamily fam = synth_family(world, rng);
    if (is_test_family(id)) {
      if (set.test.size() < test_count) {
        set.test_ids.push_back(id);
        set.test.push_back(std::move(fam));
      }
    } else if (set.train.size() < train_count) {
      set.train_ids.push_back(id);
      set.train.push_back(std::move(fam));
    }
  }
  return set;
}

}  // namespace kinface::data
