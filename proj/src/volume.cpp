#include "miassr/volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <zlib.h>

#include <json.hpp>

#include "miassr/rng.hpp"

namespace miassr::data {

Tensor Volume::slice(int64_t s) const {
  check(s >= 0 && s < slices(), "volume: slice index out of range");
  const int64_t C = channels(), H = height(), W = width();
  Tensor out({C, H, W});
  std::memcpy(out.data(), voxels.data() + s * C * H * W, sizeof(Scalar) * C * H * W);
  return out;
}

DatasetProfile profile_by_name(const std::string& name) {
  if (name == "oasis") return {"oasis", 144, 180, 1, "axial"};
  if (name == "brats") return {"brats", 180, 170, 4, "axial"};
  if (name == "acdc") return {"acdc", 128, 128, 1, "axial"};
  if (name == "covid_ct") return {"covid_ct", 412, 332, 1, "axial"};
  fail("unknown dataset profile '" + name + "' (expected oasis, brats, acdc or covid_ct)");
}

void normalize_minmax(Tensor& t) {
  check(t.numel() > 0, "normalize: empty tensor");
  Scalar lo = t.min(), hi = t.max();
  check(hi > lo, "normalize: constant volume cannot be min-max normalized");
  const Scalar range = hi - lo;
  Scalar* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = (p[i] - lo) / range;
}

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open '" + path + "' for reading");
  f.seekg(0, std::ios::end);
  const auto n = static_cast<size_t>(f.tellg());
  f.seekg(0);
  std::vector<uint8_t> buf(n);
  f.read(reinterpret_cast<char*>(buf.data()), n);
  check(f.good(), "short read on '" + path + "'");
  return buf;
}

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& in) {
  z_stream zs{};
  check(inflateInit2(&zs, 16 + MAX_WBITS) == Z_OK, "zlib init failed");
  std::vector<uint8_t> out;
  out.reserve(in.size() * 4);
  uint8_t chunk[1 << 16];
  zs.next_in = const_cast<uint8_t*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      fail("corrupt gzip stream");
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

template <class T>
T bswap(T v) {
  uint8_t* p = reinterpret_cast<uint8_t*>(&v);
  for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
  return v;
}

template <class T>
T read_at(const std::vector<uint8_t>& b, size_t off, bool swap) {
  check(off + sizeof(T) <= b.size(), "volume file truncated");
  T v;
  std::memcpy(&v, b.data() + off, sizeof(T));
  return swap ? bswap(v) : v;
}

// Raw voxel grid in x-fastest order plus geometry, before slicing/cropping.
struct Grid {
  int64_t nx = 0, ny = 0, nz = 0, nt = 1;
  std::vector<double> vox;  // [t][z][y][x] flattened x-fastest
  double at(int64_t x, int64_t y, int64_t z, int64_t t) const {
    return vox[((t * nz + z) * ny + y) * nx + x];
  }
};

Grid read_nifti(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (ends_with(path, ".gz")) bytes = gunzip(bytes);
  check(bytes.size() >= 352, "NIfTI file too small: '" + path + "'");
  const char* magic = reinterpret_cast<const char*>(bytes.data() + 344);
  check(std::strncmp(magic, "n+1", 3) == 0 || std::strncmp(magic, "ni1", 3) == 0,
        "'" + path + "' is not a NIfTI-1 file");
  bool swap = false;
  int16_t ndim = read_at<int16_t>(bytes, 40, false);
  if (ndim < 1 || ndim > 7) {
    swap = true;
    ndim = read_at<int16_t>(bytes, 40, true);
    check(ndim >= 1 && ndim <= 7, "bad NIfTI dim[0] in '" + path + "'");
  }
  check(ndim >= 3, "need a 3-d or 4-d NIfTI volume: '" + path + "'");
  Grid g;
  g.nx = read_at<int16_t>(bytes, 42, swap);
  g.ny = read_at<int16_t>(bytes, 44, swap);
  g.nz = read_at<int16_t>(bytes, 46, swap);
  g.nt = ndim >= 4 ? read_at<int16_t>(bytes, 48, swap) : 1;
  if (g.nt < 1) g.nt = 1;
  const int16_t dtype = read_at<int16_t>(bytes, 70, swap);
  const double vox_offset = read_at<float>(bytes, 108, swap);
  double slope = read_at<float>(bytes, 112, swap);
  const double inter = read_at<float>(bytes, 116, swap);
  if (slope == 0.0) slope = 1.0;
  const size_t off = static_cast<size_t>(vox_offset);
  const int64_t count = g.nx * g.ny * g.nz * g.nt;
  check(count > 0, "empty NIfTI grid in '" + path + "'");
  g.vox.resize(count);

  auto load = [&](auto tag) {
    using T = decltype(tag);
    check(off + count * sizeof(T) <= bytes.size(), "NIfTI payload truncated in '" + path + "'");
    for (int64_t i = 0; i < count; ++i)
      g.vox[i] = slope * static_cast<double>(read_at<T>(bytes, off + i * sizeof(T), swap)) + inter;
  };
  switch (dtype) {
    case 2: load(uint8_t{}); break;
    case 4: load(int16_t{}); break;
    case 8: load(int32_t{}); break;
    case 16: load(float{}); break;
    case 64: load(double{}); break;
    case 256: load(int8_t{}); break;
    case 512: load(uint16_t{}); break;
    default: fail("unsupported NIfTI datatype " + std::to_string(dtype) + " in '" + path + "'");
  }
  return g;
}

Grid read_mvol_grid(const std::string& path, std::vector<std::string>* modalities) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  const uint64_t hlen = read_at<uint64_t>(bytes, 0, false);
  check(8 + hlen <= bytes.size(), "mvol header truncated in '" + path + "'");
  nlohmann::json hdr;
  try {
    hdr = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
  } catch (const std::exception& e) {
    fail("bad mvol header in '" + path + "': " + e.what());
  }
  check(hdr.value("dtype", "") == "float32", "mvol '" + path + "': expected float32 payload");
  const auto shape = hdr.at("shape").get<std::vector<int64_t>>();
  check(shape.size() == 4, "mvol '" + path + "': shape must be [S,C,H,W]");
  if (modalities && hdr.contains("modalities"))
    *modalities = hdr.at("modalities").get<std::vector<std::string>>();
  // mvol stores [S,C,H,W]; expose it as a grid with x=W, y=H, z=S, t=C re-ordered
  // by the caller. We keep the natural order here and mark it via nt/nz/ny/nx.
  Grid g;
  g.nx = shape[3];
  g.ny = shape[2];
  g.nz = shape[0];
  g.nt = shape[1];
  const int64_t count = shape[0] * shape[1] * shape[2] * shape[3];
  check(8 + hlen + count * 4 <= bytes.size(), "mvol payload truncated in '" + path + "'");
  g.vox.resize(count);
  for (int64_t i = 0; i < count; ++i)
    g.vox[i] = static_cast<double>(read_at<float>(bytes, 8 + hlen + i * 4, false));
  return g;
}

// Slice the grid along the profile plane into [S, C, H, W].
Tensor slice_grid(const Grid& g, const std::string& plane, bool grid_is_schw) {
  int64_t S, H, W;
  const int64_t C = g.nt;
  auto at = [&](int64_t s, int64_t c, int64_t i, int64_t j) -> double {
    if (grid_is_schw) {
      // mvol payload is already [S,C,H,W] (stored via Grid as z=S, t=C, y=H, x=W)
      return g.vox[((s * g.nt + c) * g.ny + i) * g.nx + j];
    }
    if (plane == "axial") return g.at(i, j, s, c);
    if (plane == "coronal") return g.at(i, s, j, c);
    return g.at(s, i, j, c);  // sagittal
  };
  if (grid_is_schw || plane == "axial") {
    S = g.nz;
    H = grid_is_schw ? g.ny : g.nx;
    W = grid_is_schw ? g.nx : g.ny;
  } else if (plane == "coronal") {
    S = g.ny;
    H = g.nx;
    W = g.nz;
  } else if (plane == "sagittal") {
    S = g.nx;
    H = g.ny;
    W = g.nz;
  } else {
    fail("unknown slicing plane '" + plane + "'");
  }
  Tensor out({S, C, H, W});
  for (int64_t s = 0; s < S; ++s)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) out.at4(s, c, i, j) = static_cast<Scalar>(at(s, c, i, j));
  return out;
}

// Center-crop [S,C,H,W] to the profile window, rejecting crops that would
// discard any non-zero voxel.
Tensor crop_validated(const Tensor& full, const DatasetProfile& p, const std::string& src) {
  const int64_t S = full.dim(0), C = full.dim(1), H = full.dim(2), W = full.dim(3);
  check(full.all_finite(), "volume '" + src + "' contains non-finite voxels");
  check(p.crop_h <= H && p.crop_w <= W, "profile '" + p.name + "' crop " + std::to_string(p.crop_h) + "x" +
                                            std::to_string(p.crop_w) + " exceeds slice size " + std::to_string(H) +
                                            "x" + std::to_string(W) + " in '" + src + "'");
  bool any_nonzero = false;
  for (int64_t i = 0; i < full.numel() && !any_nonzero; ++i) any_nonzero = full[i] != 0;
  check(any_nonzero, "crop profile cannot be validated on empty volume '" + src + "'");

  const int64_t y0 = (H - p.crop_h) / 2;
  const int64_t x0 = (W - p.crop_w) / 2;
  for (int64_t s = 0; s < S; ++s)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          if (full.at4(s, c, i, j) == 0) continue;
          if (i < y0 || i >= y0 + p.crop_h || j < x0 || j >= x0 + p.crop_w)
            fail("crop for profile '" + p.name + "' would discard non-zero voxel at slice " + std::to_string(s) +
                 ", (" + std::to_string(i) + "," + std::to_string(j) + ") in '" + src + "'");
        }
  Tensor out({S, C, p.crop_h, p.crop_w});
  for (int64_t s = 0; s < S; ++s)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < p.crop_h; ++i)
        for (int64_t j = 0; j < p.crop_w; ++j) out.at4(s, c, i, j) = full.at4(s, c, y0 + i, x0 + j);
  return out;
}

void normalize_per_channel(Tensor& t) {
  const int64_t S = t.dim(0), C = t.dim(1), HW = t.dim(2) * t.dim(3);
  for (int64_t c = 0; c < C; ++c) {
    Scalar lo = t.at4(0, c, 0, 0), hi = lo;
    for (int64_t s = 0; s < S; ++s)
      for (int64_t i = 0; i < HW; ++i) {
        const Scalar v = t.data()[(s * C + c) * HW + i];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    check(hi > lo, "normalize: modality " + std::to_string(c) + " is constant");
    for (int64_t s = 0; s < S; ++s)
      for (int64_t i = 0; i < HW; ++i) {
        Scalar& v = t.data()[(s * C + c) * HW + i];
        v = (v - lo) / (hi - lo);
      }
  }
}

std::vector<std::string> default_modalities(int64_t c) {
  std::vector<std::string> m;
  for (int64_t i = 0; i < c; ++i) m.push_back(c == 1 ? "intensity" : "mod" + std::to_string(i));
  return m;
}

}  // namespace

Volume load_mvol(const std::string& path) {
  std::vector<std::string> modalities;
  Grid g = read_mvol_grid(path, &modalities);
  Volume v;
  v.voxels = slice_grid(g, "axial", true);
  check(v.voxels.all_finite(), "mvol '" + path + "': non-finite voxels");
  check(v.voxels.min() >= 0.0 && v.voxels.max() <= 1.0,
        "mvol '" + path + "': values outside [0,1]; prepare the volume first");
  v.modalities = modalities.empty() ? default_modalities(v.voxels.dim(1)) : modalities;
  v.id = path;
  return v;
}

Volume load_volume(const std::string& path, const DatasetProfile& profile) {
  std::vector<std::string> modalities;
  Grid g;
  bool schw = false;
  if (ends_with(path, ".mvol")) {
    g = read_mvol_grid(path, &modalities);
    schw = true;
  } else if (ends_with(path, ".nii") || ends_with(path, ".nii.gz")) {
    g = read_nifti(path);
  } else {
    fail("unsupported volume format: '" + path + "' (expected .mvol, .nii or .nii.gz)");
  }
  Tensor sliced = slice_grid(g, profile.plane, schw);
  check(sliced.dim(1) == profile.channels,
        "volume '" + path + "' has " + std::to_string(sliced.dim(1)) + " channels, profile '" + profile.name +
            "' wants " + std::to_string(profile.channels));
  Tensor cropped = crop_validated(sliced, profile, path);
  normalize_per_channel(cropped);
  Volume v;
  v.voxels = std::move(cropped);
  v.modalities = modalities.empty() ? default_modalities(profile.channels) : modalities;
  v.id = path;
  return v;
}

Volume load_volume_multi(const std::vector<std::string>& paths, const DatasetProfile& profile) {
  check(!paths.empty(), "load_volume_multi: no paths given");
  check(static_cast<int64_t>(paths.size()) == profile.channels,
        "profile '" + profile.name + "' wants " + std::to_string(profile.channels) + " modalities, got " +
            std::to_string(paths.size()) + " files");
  DatasetProfile mono = profile;
  mono.channels = 1;
  std::vector<Volume> parts;
  for (const auto& p : paths) parts.push_back(load_volume(p, mono));
  const Volume& first = parts.front();
  for (const auto& v : parts)
    check(v.voxels.same_shape(first.voxels), "modality files disagree on volume geometry: '" + v.id + "'");
  const int64_t S = first.slices(), H = first.height(), W = first.width();
  const int64_t C = profile.channels;
  Volume out;
  out.voxels = Tensor({S, C, H, W});
  for (int64_t s = 0; s < S; ++s)
    for (int64_t c = 0; c < C; ++c)
      std::memcpy(out.voxels.data() + (s * C + c) * H * W, parts[c].voxels.data() + s * H * W,
                  sizeof(Scalar) * H * W);
  out.modalities = default_modalities(C);
  out.id = paths.front() + "+";
  return out;
}

void write_mvol(const std::string& path, const Volume& v) {
  nlohmann::json hdr;
  hdr["shape"] = v.voxels.shape();
  hdr["modalities"] = v.modalities;
  hdr["dtype"] = "float32";
  const std::string hs = hdr.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), "cannot open '" + path + "' for writing");
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), hs.size());
  for (int64_t i = 0; i < v.voxels.numel(); ++i) {
    const float x = static_cast<float>(v.voxels[i]);
    f.write(reinterpret_cast<const char*>(&x), 4);
  }
  check(f.good(), "write failed on '" + path + "'");
}

Volume synth_phantom(uint64_t seed, int64_t S, int64_t H, int64_t W, int64_t channels) {
  check(S >= 1, "phantom: need at least one slice");
  check(H >= 32 && W >= 32, "phantom: dims below 32x32 are not supported");
  check(channels >= 1, "phantom: bad channel count");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);

  struct Ellipse {
    double cy, cx, ry, rx, theta, amp, dy, dx, phase, freq;
  };
  std::vector<std::vector<Ellipse>> per_channel(channels);
  for (int64_t c = 0; c < channels; ++c) {
    auto& es = per_channel[c];
    // broad base blob so the interior is never empty
    es.push_back({0.5 * H, 0.5 * W, 0.34 * H, 0.34 * W, 0.0, 0.35, 0.0, 0.0, rng.uniform(0, 6.28), 0.05});
    const int64_t n = 5 + rng.below(4);
    for (int64_t e = 0; e < n; ++e) {
      Ellipse el;
      el.cy = rng.uniform(0.3, 0.7) * H;
      el.cx = rng.uniform(0.3, 0.7) * W;
      el.ry = rng.uniform(0.06, 0.22) * H;
      el.rx = rng.uniform(0.06, 0.22) * W;
      el.theta = rng.uniform(0.0, std::numbers::pi);
      el.amp = rng.uniform(0.3, 1.0);
      el.dy = rng.uniform(-0.008, 0.008) * H;
      el.dx = rng.uniform(-0.008, 0.008) * W;
      el.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      el.freq = rng.uniform(0.08, 0.5);
      es.push_back(el);
    }
  }

  const double my = std::max<int64_t>(2, H / 16);
  const double mx = std::max<int64_t>(2, W / 16);
  Tensor vox({S, channels, H, W});
#pragma omp parallel for schedule(static) if (S * channels * H * W > 16384)
  for (int64_t t = 0; t < S * channels * H * W; ++t) {
    const int64_t s = t / (channels * H * W);
    const int64_t c = (t / (H * W)) % channels;
    const int64_t y = (t / W) % H;
    const int64_t x = t % W;
    double v = 0.0;
    for (const Ellipse& e : per_channel[c]) {
      const double cy = e.cy + e.dy * s;
      const double cx = e.cx + e.dx * s;
      const double u = x - cx, w = y - cy;
      const double ct = std::cos(e.theta), st = std::sin(e.theta);
      const double q = std::pow((u * ct + w * st) / e.rx, 2) + std::pow((-u * st + w * ct) / e.ry, 2);
      const double amp = e.amp * (0.65 + 0.35 * std::sin(e.phase + e.freq * s));
      v += amp * std::exp(-3.0 * q);
    }
    const double ramp = std::min({y / my, (H - 1 - y) / my, x / mx, (W - 1 - x) / mx, 1.0});
    vox[t] = static_cast<Scalar>(v * ramp * ramp);
  }
  const Scalar peak = vox.max();
  check(peak > 0, "phantom: degenerate render");
  for (int64_t i = 0; i < vox.numel(); ++i) vox[i] /= peak;

  Volume out;
  out.voxels = std::move(vox);
  out.modalities = default_modalities(channels);
  out.id = "phantom:" + std::to_string(seed);
  return out;
}

std::vector<Volume> phantom_corpus(uint64_t seed, int64_t count, int64_t S, int64_t H, int64_t W,
                                   int64_t channels) {
  std::vector<Volume> vs;
  for (int64_t i = 0; i < count; ++i) vs.push_back(synth_phantom(seed + i, S, H, W, channels));
  return vs;
}

}  // namespace miassr::data
