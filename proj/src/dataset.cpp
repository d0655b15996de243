#include "backstep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "backstep/errors.hpp"
#include "backstep/sha256.hpp"

namespace backstep {

namespace {

constexpr int kDatasetVersion = 1;

void validate_spec(const LambdaFamilySpec& spec) {
  if (!(spec.gamma_lo < spec.gamma_hi)) throw InvalidInputError("gamma_lo must be below gamma_hi");
  if (!std::isfinite(spec.c)) throw InvalidInputError("amplitude must be finite");
}

// splitmix64 finalizer on seed ^ index: the per-sample stream key.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t sample_bytes(std::size_t n) { return sizeof(double) * (n + n * (n + 1) / 2); }

void append_doubles(std::vector<unsigned char>& buf, const std::vector<double>& v) {
  std::size_t at = buf.size();
  buf.resize(at + v.size() * sizeof(double));
  std::memcpy(buf.data() + at, v.data(), v.size() * sizeof(double));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  f.seekg(0, std::ios::end);
  std::streamoff len = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<std::size_t>(len));
  if (len > 0) f.read(reinterpret_cast<char*>(buf.data()), len);
  if (!f) throw IoError("cannot read " + path);
  return buf;
}

}  // namespace

double sample_gamma(const LambdaFamilySpec& spec, std::size_t index) {
  validate_spec(spec);
  std::uint64_t z = mix64(spec.seed ^ static_cast<std::uint64_t>(index));
  double u = static_cast<double>(z >> 11) * 0x1.0p-53;
  return spec.gamma_lo + (spec.gamma_hi - spec.gamma_lo) * u;
}

ReactionProfile sample_lambda(const LambdaFamilySpec& spec, std::size_t index,
                              std::size_t n_points) {
  double gamma = sample_gamma(spec, index);
  return chebyshev_profile(spec.c, gamma, n_points);
}

std::string DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["n_samples"] = n_samples;
  j["n_points"] = n_points;
  j["family"]["name"] = "chebyshev";
  j["family"]["c"] = family.c;
  j["family"]["gamma_lo"] = family.gamma_lo;
  j["family"]["gamma_hi"] = family.gamma_hi;
  j["family"]["seed"] = family.seed;
  j["split"] = split;
  j["seed"] = seed;
  j["data_sha256"] = data_sha256;
  j["residual_constant"] = residual_constant;
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kDatasetVersion) {
      throw FormatError("unsupported dataset version " + std::to_string(m.version));
    }
    m.n_samples = j.at("n_samples").get<std::size_t>();
    m.n_points = j.at("n_points").get<std::size_t>();
    const auto& fam = j.at("family");
    if (fam.at("name").get<std::string>() != "chebyshev") {
      throw FormatError("unknown lambda family in manifest");
    }
    m.family.family = LambdaFamily::chebyshev;
    m.family.c = fam.at("c").get<double>();
    m.family.gamma_lo = fam.at("gamma_lo").get<double>();
    m.family.gamma_hi = fam.at("gamma_hi").get<double>();
    m.family.seed = fam.at("seed").get<std::uint64_t>();
    m.split = j.at("split").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.data_sha256 = j.at("data_sha256").get<std::string>();
    m.residual_constant = j.at("residual_constant").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest missing or mistyped field: ") + e.what());
  }
  return m;
}

DatasetManifest build_dataset(const LambdaFamilySpec& spec, std::size_t n_samples,
                              std::size_t n_points, const GoursatSolveOptions& options,
                              double split, const std::string& out_dir) {
  validate_spec(spec);
  if (n_samples == 0) throw InvalidInputError("dataset needs at least one sample");
  if (!(split > 0.0 && split < 1.0)) throw InvalidInputError("split must lie in (0, 1)");

  GoursatSolveOptions opts = options;
  opts.n_points = n_points;

  std::vector<unsigned char> blob;
  blob.reserve(n_samples * sample_bytes(n_points));
  double max_ratio = 0.0;
  const double h = UniformGrid1D(n_points).h;
  for (std::size_t i = 0; i < n_samples; ++i) {
    ReactionProfile lam = sample_lambda(spec, i, n_points);
    KernelField k;
    try {
      k = solve_kernel(lam, opts);
    } catch (const std::exception& e) {
      throw ConvergenceError("sample " + std::to_string(i) + ": " + e.what(), 0.0);
    }
    max_ratio = std::max(max_ratio, kernel_residuals(k, lam).pde_residual_sup / (h * h));
    append_doubles(blob, lam.values);
    append_doubles(blob, k.values);
  }

  DatasetManifest m;
  m.version = kDatasetVersion;
  m.n_samples = n_samples;
  m.n_points = n_points;
  m.family = spec;
  m.split = split;
  m.seed = spec.seed;
  m.data_sha256 = sha256_hex(blob);
  // Headroom of 1e-9 keeps the bound valid when C h^2 is recomputed from the
  // rounded quotient.
  m.residual_constant = max_ratio * (1.0 + 1e-9);

  std::filesystem::create_directories(out_dir);
  std::string bin_path = (std::filesystem::path(out_dir) / "data.bin").string();
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot write " + bin_path);
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!bin) throw IoError("write failed for " + bin_path);
  bin.close();

  std::string man_path = (std::filesystem::path(out_dir) / "manifest.json").string();
  std::ofstream man(man_path);
  if (!man) throw IoError("cannot write " + man_path);
  man << m.to_json() << "\n";
  if (!man) throw IoError("write failed for " + man_path);
  return m;
}

Dataset load_dataset(const std::string& dir) {
  std::string man_path = (std::filesystem::path(dir) / "manifest.json").string();
  std::string bin_path = (std::filesystem::path(dir) / "data.bin").string();

  std::ifstream man(man_path);
  if (!man) throw IoError("cannot open " + man_path);
  std::string text((std::istreambuf_iterator<char>(man)), std::istreambuf_iterator<char>());

  Dataset ds;
  ds.manifest = DatasetManifest::from_json(text);
  const std::size_t n = ds.manifest.n_points;
  if (n < 3) throw FormatError("manifest grid is too small");

  std::vector<unsigned char> blob = read_file(bin_path);
  const std::size_t expect = ds.manifest.n_samples * sample_bytes(n);
  if (blob.size() != expect) {
    throw FormatError("data blob truncated or oversized: " + std::to_string(blob.size()) +
                      " bytes, expected " + std::to_string(expect));
  }
  if (sha256_hex(blob) != ds.manifest.data_sha256) {
    throw ChecksumError("data blob does not match manifest checksum");
  }

  ds.grid = UniformGrid1D(n);
  ds.lambdas.reserve(ds.manifest.n_samples);
  ds.kernels.reserve(ds.manifest.n_samples);
  const std::size_t tri = n * (n + 1) / 2;
  std::size_t at = 0;
  for (std::size_t i = 0; i < ds.manifest.n_samples; ++i) {
    ReactionProfile lam(ds.grid);
    std::memcpy(lam.values.data(), blob.data() + at, n * sizeof(double));
    at += n * sizeof(double);
    KernelField k(ds.grid);
    std::memcpy(k.values.data(), blob.data() + at, tri * sizeof(double));
    at += tri * sizeof(double);
    ds.lambdas.push_back(std::move(lam));
    ds.kernels.push_back(std::move(k));
  }
  return ds;
}

TrainingSet to_training_set(const Dataset& data) {
  TrainingSet set;
  set.grid = data.grid;
  set.lambdas.reserve(data.lambdas.size());
  set.kernels.reserve(data.kernels.size());
  for (const ReactionProfile& lam : data.lambdas) set.lambdas.push_back(lam.values);
  for (const KernelField& k : data.kernels) set.kernels.push_back(k.values);

  std::vector<std::size_t> idx(data.lambdas.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(substream(data.manifest.seed, 0x5e7u));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t cut = static_cast<std::size_t>(
      std::llround(data.manifest.split * static_cast<double>(idx.size())));
  cut = std::clamp<std::size_t>(cut, 1, idx.size() > 1 ? idx.size() - 1 : 1);
  set.train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
  set.test_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  return set;
}

}  // namespace backstep
