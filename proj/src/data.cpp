#include "pcfed/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pcfed/errors.hpp"
#include "pcfed/rng.hpp"

namespace pcfed::data {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in.good()) throw ValidationError("read failed for " + path);
  return buf;
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::string& path) {
  if (offset + 4 > buf.size()) {
    throw ValidationError(path + ": truncated at byte " + std::to_string(offset) +
                          " (wanted 4 more bytes)");
  }
  return (std::uint32_t(buf[offset]) << 24) | (std::uint32_t(buf[offset + 1]) << 16) |
         (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_le(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
  if (offset + sizeof(T) > buf.size()) {
    throw ValidationError(path + ": truncated at byte " + std::to_string(offset));
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(buf[offset + i]) << (8 * i);
  }
  return v;
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::uint32_t kDumpMagic = 0x50434644;
constexpr std::uint32_t kDumpVersion = 1;

std::vector<std::size_t> shuffled_identity(std::size_t n, RngStream& stream) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = static_cast<std::size_t>(stream.next_below(i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

Dataset take_rows(const Dataset& src, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.n_samples = rows.size();
  out.n_features = src.n_features;
  out.n_classes = src.n_classes;
  out.features.resize(rows.size() * src.n_features);
  out.labels.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::memcpy(out.features.data() + r * src.n_features, src.row(rows[r]),
                src.n_features * sizeof(double));
    out.labels[r] = src.labels[rows[r]];
  }
  return out;
}

}  // namespace

Dataset load_idx_images(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != kIdxImagesMagic) {
    std::ostringstream msg;
    msg << images_path << ": bad magic 0x" << std::hex << img_magic << " at byte 0 (want 0x803)";
    throw ValidationError(msg.str());
  }
  const std::uint32_t count = read_be32(img, 4, images_path);
  const std::uint32_t rows = read_be32(img, 8, images_path);
  const std::uint32_t cols = read_be32(img, 12, images_path);
  const std::size_t pixels = std::size_t(count) * rows * cols;
  if (img.size() != 16 + pixels) {
    throw ValidationError(images_path + ": expected " + std::to_string(16 + pixels) +
                          " bytes, found " + std::to_string(img.size()) +
                          " (mismatch from byte 16)");
  }

  const auto lab = read_file(labels_path);
  const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabelsMagic) {
    std::ostringstream msg;
    msg << labels_path << ": bad magic 0x" << std::hex << lab_magic << " at byte 0 (want 0x801)";
    throw ValidationError(msg.str());
  }
  const std::uint32_t lab_count = read_be32(lab, 4, labels_path);
  if (lab_count != count) {
    throw ValidationError(labels_path + ": label count " + std::to_string(lab_count) +
                          " does not match image count " + std::to_string(count));
  }
  if (lab.size() != 8 + lab_count) {
    throw ValidationError(labels_path + ": expected " + std::to_string(8 + lab_count) +
                          " bytes, found " + std::to_string(lab.size()));
  }

  Dataset out;
  out.n_samples = count;
  out.n_features = std::size_t(rows) * cols;
  out.n_classes = 10;
  out.features.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    out.features[i] = static_cast<double>(img[16 + i]) / 255.0;
  }
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char l = lab[8 + i];
    if (l >= 10) {
      throw ValidationError(labels_path + ": label " + std::to_string(int(l)) + " at byte " +
                            std::to_string(8 + i) + " out of range 0..9");
    }
    out.labels[i] = l;
  }
  out.validate("idx dataset");
  return out;
}

void save_idx_images(const Dataset& data, const std::string& images_path,
                     const std::string& labels_path, std::size_t rows, std::size_t cols) {
  data.validate("save_idx_images");
  if (rows * cols != data.n_features) {
    throw ValidationError("save_idx_images: rows*cols must equal n_features");
  }
  if (data.n_classes > 10) throw ValidationError("save_idx_images: more than 10 classes");
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw RuntimeFailure("save_idx_images: cannot open " + images_path);
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(data.n_samples));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : data.features) {
    const double clamped = std::min(1.0, std::max(0.0, v));
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
  }
  if (!img.good()) throw RuntimeFailure("save_idx_images: write failed for " + images_path);

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw RuntimeFailure("save_idx_images: cannot open " + labels_path);
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.n_samples));
  for (unsigned char l : data.labels) lab.put(static_cast<char>(l));
  if (!lab.good()) throw RuntimeFailure("save_idx_images: write failed for " + labels_path);
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
  if (batch_paths.empty()) throw ValidationError("load_cifar10: no batch files given");
  constexpr std::size_t kRecord = 3073;
  constexpr std::size_t kPixels = 3072;

  Dataset out;
  out.n_features = kPixels;
  out.n_classes = 10;
  for (const auto& path : batch_paths) {
    const auto buf = read_file(path);
    if (buf.empty() || buf.size() % kRecord != 0) {
      throw ValidationError(path + ": size " + std::to_string(buf.size()) +
                            " is not a positive multiple of 3073");
    }
    const std::size_t records = buf.size() / kRecord;
    const std::size_t base = out.n_samples;
    out.n_samples += records;
    out.features.resize(out.n_samples * kPixels);
    out.labels.resize(out.n_samples);
    for (std::size_t r = 0; r < records; ++r) {
      const std::size_t off = r * kRecord;
      const unsigned char label = buf[off];
      if (label >= 10) {
        throw ValidationError(path + ": label " + std::to_string(int(label)) + " at byte " +
                              std::to_string(off) + " out of range 0..9");
      }
      out.labels[base + r] = label;
      double* dst = out.features.data() + (base + r) * kPixels;
      for (std::size_t p = 0; p < kPixels; ++p) {
        dst[p] = static_cast<double>(buf[off + 1 + p]) / 255.0;
      }
    }
  }
  out.validate("cifar10 dataset");
  return out;
}

void save_dump(const Dataset& data, const std::string& path) {
  data.validate("save_dump");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("save_dump: cannot open " + path);
  write_le<std::uint32_t>(out, kDumpMagic);
  write_le<std::uint32_t>(out, kDumpVersion);
  write_le<std::uint64_t>(out, data.n_samples);
  write_le<std::uint64_t>(out, data.n_features);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.n_classes));
  for (double v : data.features) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_le<std::uint32_t>(out, bits);
  }
  out.write(reinterpret_cast<const char*>(data.labels.data()),
            static_cast<std::streamsize>(data.labels.size()));
  if (!out.good()) throw RuntimeFailure("save_dump: write failed for " + path);
}

Dataset load_dump(const std::string& path) {
  const auto buf = read_file(path);
  const auto magic = read_le<std::uint32_t>(buf, 0, path);
  if (magic != kDumpMagic) {
    std::ostringstream msg;
    msg << path << ": bad magic 0x" << std::hex << magic << " at byte 0";
    throw ValidationError(msg.str());
  }
  const auto version = read_le<std::uint32_t>(buf, 4, path);
  if (version != kDumpVersion) {
    throw ValidationError(path + ": unsupported dump version " + std::to_string(version));
  }
  const auto n = read_le<std::uint64_t>(buf, 8, path);
  const auto d = read_le<std::uint64_t>(buf, 16, path);
  const auto kc = read_le<std::uint32_t>(buf, 24, path);
  const std::size_t header = 28;
  const std::size_t expected = header + n * d * 4 + n;
  if (buf.size() != expected) {
    throw ValidationError(path + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(buf.size()));
  }
  Dataset out;
  out.n_samples = n;
  out.n_features = d;
  out.n_classes = kc;
  out.features.resize(n * d);
  for (std::size_t i = 0; i < n * d; ++i) {
    const auto bits = read_le<std::uint32_t>(buf, header + i * 4, path);
    float f;
    std::memcpy(&f, &bits, 4);
    out.features[i] = static_cast<double>(f);
  }
  out.labels.assign(buf.begin() + static_cast<std::ptrdiff_t>(header + n * d * 4), buf.end());
  out.validate("dump dataset");
  return out;
}

std::vector<Dataset> partition(const Dataset& data, const PartitionPlan& plan) {
  data.validate("partition input");
  if (plan.agents == 0) throw ValidationError("partition: need at least one agent");
  if (plan.agents > data.n_samples) {
    throw ValidationError("partition: more agents than samples");
  }

  std::vector<std::vector<std::size_t>> assignment(plan.agents);
  if (plan.scheme == PartitionScheme::IidShuffle) {
    RngStream stream(plan.seed, kPartitionStreamId);
    const auto perm = shuffled_identity(data.n_samples, stream);
    const std::size_t base = data.n_samples / plan.agents;
    const std::size_t rem = data.n_samples % plan.agents;
    std::size_t cursor = 0;
    for (std::size_t a = 0; a < plan.agents; ++a) {
      const std::size_t size = base + (a < rem ? 1 : 0);
      assignment[a].assign(perm.begin() + static_cast<std::ptrdiff_t>(cursor),
                           perm.begin() + static_cast<std::ptrdiff_t>(cursor + size));
      cursor += size;
    }
  } else {
    if (plan.shards_per_agent == 0) {
      throw ValidationError("partition: shards_per_agent must be positive");
    }
    const std::size_t shards = plan.agents * plan.shards_per_agent;
    if (shards > data.n_samples) {
      throw ValidationError("partition: more shards than samples");
    }
    std::vector<std::size_t> order(data.n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&data](std::size_t a, std::size_t b) {
      return data.labels[a] < data.labels[b];
    });
    RngStream stream(plan.seed, kPartitionStreamId);
    const auto shard_order = shuffled_identity(shards, stream);
    const std::size_t base = data.n_samples / shards;
    const std::size_t rem = data.n_samples % shards;
    std::vector<std::size_t> starts(shards + 1, 0);
    for (std::size_t s = 0; s < shards; ++s) {
      starts[s + 1] = starts[s] + base + (s < rem ? 1 : 0);
    }
    for (std::size_t a = 0; a < plan.agents; ++a) {
      for (std::size_t k = 0; k < plan.shards_per_agent; ++k) {
        const std::size_t shard = shard_order[a * plan.shards_per_agent + k];
        for (std::size_t r = starts[shard]; r < starts[shard + 1]; ++r) {
          assignment[a].push_back(order[r]);
        }
      }
    }
  }

  std::vector<Dataset> out;
  out.reserve(plan.agents);
  for (const auto& rows : assignment) {
    if (rows.empty()) throw ValidationError("partition: an agent received no samples");
    out.push_back(take_rows(data, rows));
  }
  return out;
}

Dataset stratified_subset(const Dataset& data, std::size_t target) {
  data.validate("stratified_subset input");
  if (target < data.n_classes || target > data.n_samples) {
    throw ValidationError("stratified_subset: need classes <= target <= n_samples");
  }
  std::vector<std::vector<std::size_t>> per_class(data.n_classes);
  for (std::size_t r = 0; r < data.n_samples; ++r) per_class[data.labels[r]].push_back(r);

  const double scale = static_cast<double>(target) / static_cast<double>(data.n_samples);
  std::vector<std::size_t> quota(data.n_classes, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < data.n_classes; ++c) {
    const double exact = scale * static_cast<double>(per_class[c].size());
    quota[c] = static_cast<std::size_t>(exact);
    assigned += quota[c];
    remainders.push_back({exact - static_cast<double>(quota[c]), c});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i) {
    const std::size_t c = remainders[i].second;
    if (quota[c] < per_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }
  // Class caps can leave a shortfall; round-robin any leftovers.
  for (std::size_t c = 0; assigned < target; c = (c + 1) % data.n_classes) {
    if (quota[c] < per_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  std::vector<std::size_t> rows;
  rows.reserve(target);
  for (std::size_t c = 0; c < data.n_classes; ++c) {
    rows.insert(rows.end(), per_class[c].begin(),
                per_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(rows.begin(), rows.end());
  return take_rows(data, rows);
}

Dataset make_classification(std::size_t n_samples, std::size_t n_features,
                            std::size_t n_classes, std::uint64_t seed) {
  if (n_samples == 0 || n_features == 0 || n_classes < 2) {
    throw ValidationError("make_classification: need samples, features and >= 2 classes");
  }
  RngStream stream(seed, kDataStreamId);
  std::vector<ParamVector> centers(n_classes, ParamVector(n_features));
  for (auto& c : centers) {
    for (double& v : c) v = stream.next_gaussian();
  }
  Dataset out;
  out.n_samples = n_samples;
  out.n_features = n_features;
  out.n_classes = n_classes;
  out.features.resize(n_samples * n_features);
  out.labels.resize(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t label = s % n_classes;
    out.labels[s] = static_cast<std::uint8_t>(label);
    double* row = out.features.data() + s * n_features;
    for (std::size_t d = 0; d < n_features; ++d) {
      row[d] = centers[label][d] + 0.3 * stream.next_gaussian();
    }
  }
  double lo = out.features[0], hi = out.features[0];
  for (double v : out.features) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  for (double& v : out.features) {
    v = range > 0.0 ? (v - lo) / range : 0.5;
  }
  out.validate("make_classification");
  return out;
}

namespace {

// Orthogonal factor of a seeded gaussian matrix by Householder QR, with the
// R diagonal forced positive so the factor is unique.
Matrix random_orthogonal(std::size_t n, RngStream& stream) {
  Matrix a(n, n);
  for (double& v : a.data) v = stream.next_gaussian();

  Matrix q = Matrix::identity(n);
  for (std::size_t k = 0; k < n; ++k) {
    double norm_x = 0.0;
    for (std::size_t r = k; r < n; ++r) norm_x += a.at(r, k) * a.at(r, k);
    norm_x = std::sqrt(norm_x);
    if (norm_x == 0.0) continue;
    const double alpha = a.at(k, k) >= 0.0 ? -norm_x : norm_x;
    ParamVector v(n, 0.0);
    v[k] = a.at(k, k) - alpha;
    for (std::size_t r = k + 1; r < n; ++r) v[r] = a.at(r, k);
    const double vsq = norm_sq(v);
    if (vsq == 0.0) continue;
    const double beta = 2.0 / vsq;
    // a := (I - beta v v') a ; q := q (I - beta v v')
    for (std::size_t c = k; c < n; ++c) {
      double proj = 0.0;
      for (std::size_t r = k; r < n; ++r) proj += v[r] * a.at(r, c);
      proj *= beta;
      for (std::size_t r = k; r < n; ++r) a.at(r, c) -= proj * v[r];
    }
    for (std::size_t r = 0; r < n; ++r) {
      double proj = 0.0;
      for (std::size_t c = k; c < n; ++c) proj += q.at(r, c) * v[c];
      proj *= beta;
      for (std::size_t c = k; c < n; ++c) q.at(r, c) -= proj * v[c];
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (a.at(k, k) < 0.0) {
      for (std::size_t r = 0; r < n; ++r) q.at(r, k) = -q.at(r, k);
    }
  }
  return q;
}

}  // namespace

SyntheticQuadratic make_synthetic_quadratic(const SyntheticQuadraticSpec& spec,
                                            std::uint64_t seed) {
  if (spec.agents == 0 || spec.dim == 0) {
    throw ValidationError("synthetic quadratic: agents and dim must be positive");
  }
  if (!(spec.condition_number >= 1.0) || !std::isfinite(spec.condition_number)) {
    throw ValidationError("synthetic quadratic: condition number must be >= 1");
  }
  if (!(spec.noise_level >= 0.0) || !std::isfinite(spec.noise_level)) {
    throw ValidationError("synthetic quadratic: noise level must be >= 0");
  }

  RngStream stream(seed, kProblemStreamId);
  const std::size_t m = spec.agents;
  const std::size_t n = spec.dim;

  std::vector<Matrix> qs;
  std::vector<ParamVector> bs;
  Matrix q_sum(n, n);
  ParamVector b_sum(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    Matrix q(n, n);
    if (spec.condition_number == 1.0) {
      q = Matrix::identity(n);
    } else {
      const Matrix u = random_orthogonal(n, stream);
      ParamVector lambda(n);
      const double log_kappa = std::log(spec.condition_number);
      for (double& l : lambda) l = std::exp(stream.next_unit() * log_kappa);
      // q = u' diag(lambda) u
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < n; ++k) acc += u.at(k, r) * lambda[k] * u.at(k, c);
          q.at(r, c) = acc;
        }
      }
      // exact symmetry despite the accumulation order above
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = r + 1; c < n; ++c) {
          const double avg = 0.5 * (q.at(r, c) + q.at(c, r));
          q.at(r, c) = avg;
          q.at(c, r) = avg;
        }
      }
    }
    ParamVector b(n);
    for (double& v : b) v = spec.b_scale * stream.next_gaussian();

    for (std::size_t c = 0; c < q.data.size(); ++c) q_sum.data[c] += q.data[c];
    add_scaled_inplace(b_sum, 1.0, b);
    qs.push_back(std::move(q));
    bs.push_back(std::move(b));
  }

  SyntheticQuadratic out;
  out.unconstrained_minimizer = solve_linear(q_sum, b_sum);

  const auto broadcast = [m](const std::vector<double>& v, const char* what) {
    if (v.size() != 1 && v.size() != m) {
      throw ValidationError(std::string("synthetic quadratic: ") + what +
                            " needs 1 or one-per-agent entries");
    }
    std::vector<double> out_v(m);
    for (std::size_t i = 0; i < m; ++i) out_v[i] = v.size() == 1 ? v[0] : v[i];
    return out_v;
  };
  if (!spec.tau_fraction.empty()) {
    const double v_l1 = l1_norm(out.unconstrained_minimizer);
    for (double frac : broadcast(spec.tau_fraction, "tau_fraction")) {
      out.tau.push_back(frac * v_l1);
    }
  } else if (!spec.tau.empty()) {
    out.tau = broadcast(spec.tau, "tau");
  } else {
    throw ValidationError("synthetic quadratic: need tau or tau_fraction");
  }

  for (std::size_t i = 0; i < m; ++i) {
    out.oracles.push_back(
        std::make_shared<NoisyQuadraticObjective>(qs[i], bs[i], spec.noise_level));
    out.sets.push_back(ConstraintSet::l1_ball(out.tau[i]));
  }
  return out;
}

}  // namespace pcfed::data
