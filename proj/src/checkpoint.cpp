#include "miassr/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace miassr::io {

using nlohmann::json;

const Tensor* Archive::find(const std::string& name) const {
  for (const auto& [k, t] : tensors)
    if (k == name) return &t;
  return nullptr;
}

const Tensor& Archive::require(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) fail("archive: missing tensor '" + name + "'");
  return *t;
}

bool Archive::has(const std::string& name) const { return find(name) != nullptr; }

void Archive::put(const std::string& name, Tensor t) {
  for (auto& [k, v] : tensors)
    if (k == name) {
      v = std::move(t);
      return;
    }
  tensors.emplace_back(name, std::move(t));
}

std::string Archive::meta(const std::string& key, const std::string& fallback) const {
  auto it = metadata.find(key);
  return it == metadata.end() ? fallback : it->second;
}

namespace {

constexpr const char* kDtype = sizeof(Scalar) == 8 ? "F64" : "F32";

void append_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::string archive_bytes(const Archive& a) {
  std::vector<const std::pair<std::string, Tensor>*> order;
  order.reserve(a.tensors.size());
  for (const auto& kv : a.tensors) order.push_back(&kv);
  std::sort(order.begin(), order.end(),
            [](const auto* x, const auto* y) { return x->first < y->first; });
  for (size_t i = 1; i < order.size(); ++i)
    check(order[i - 1]->first != order[i]->first, "archive: duplicate tensor name '" + order[i]->first + "'");

  json header = json::object();
  if (!a.metadata.empty()) {
    json m = json::object();
    for (const auto& [k, v] : a.metadata) m[k] = v;
    header["__metadata__"] = m;
  }
  uint64_t offset = 0;
  for (const auto* kv : order) {
    const Tensor& t = kv->second;
    const uint64_t bytes = static_cast<uint64_t>(t.numel()) * sizeof(Scalar);
    json entry;
    entry["dtype"] = kDtype;
    entry["shape"] = t.shape();
    entry["data_offsets"] = {offset, offset + bytes};
    header[kv->first] = entry;
    offset += bytes;
  }

  const std::string hs = header.dump();
  std::string out;
  out.reserve(8 + hs.size() + offset);
  append_u64_le(out, hs.size());
  out += hs;
  for (const auto* kv : order) {
    const Tensor& t = kv->second;
    const size_t n = out.size();
    out.resize(n + t.numel() * sizeof(Scalar));
    if (t.numel() > 0) std::memcpy(out.data() + n, t.data(), t.numel() * sizeof(Scalar));
  }
  return out;
}

Archive parse_archive(const std::string& bytes, const std::string& origin) {
  auto bail = [&](const std::string& why) { fail("archive: " + origin + ": " + why); };
  if (bytes.size() < 8) bail("file shorter than the 8-byte header length");
  const uint64_t hlen = read_u64_le(reinterpret_cast<const unsigned char*>(bytes.data()));
  if (hlen > bytes.size() - 8) bail("header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.substr(8, hlen));
  } catch (const std::exception& e) {
    bail(std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) bail("header is not a JSON object");

  const char* base = bytes.data() + 8 + hlen;
  const uint64_t data_len = bytes.size() - 8 - hlen;

  Archive a;
  for (auto it = header.begin(); it != header.end(); ++it) {
    if (it.key() == "__metadata__") {
      for (auto m = it.value().begin(); m != it.value().end(); ++m)
        a.metadata[m.key()] = m.value().get<std::string>();
      continue;
    }
    const json& e = it.value();
    if (!e.contains("dtype") || !e.contains("shape") || !e.contains("data_offsets"))
      bail("tensor '" + it.key() + "' is missing dtype/shape/data_offsets");
    const std::string dtype = e["dtype"].get<std::string>();
    if (dtype != "F64" && dtype != "F32") bail("tensor '" + it.key() + "' has unsupported dtype " + dtype);
    Shape shape = e["shape"].get<Shape>();
    const uint64_t begin = e["data_offsets"][0].get<uint64_t>();
    const uint64_t end = e["data_offsets"][1].get<uint64_t>();
    const uint64_t elem = dtype == "F64" ? 8 : 4;
    const int64_t n = shape_numel(shape);
    if (begin > end || end > data_len) bail("tensor '" + it.key() + "' data range is out of bounds");
    if (end - begin != static_cast<uint64_t>(n) * elem)
      bail("tensor '" + it.key() + "' data size does not match its shape");
    Tensor t(shape);
    if (dtype == "F64") {
      std::vector<double> tmp(n);
      std::memcpy(tmp.data(), base + begin, n * 8);
      for (int64_t i = 0; i < n; ++i) t.data()[i] = static_cast<Scalar>(tmp[i]);
    } else {
      std::vector<float> tmp(n);
      std::memcpy(tmp.data(), base + begin, n * 4);
      for (int64_t i = 0; i < n; ++i) t.data()[i] = static_cast<Scalar>(tmp[i]);
    }
    a.tensors.emplace_back(it.key(), std::move(t));
  }
  return a;
}

Archive read_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("archive: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_archive(bytes, path);
}

void write_archive_atomic(const std::string& path, const Archive& a) {
  const std::string bytes = archive_bytes(a);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail("archive: cannot open '" + tmp + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) fail("archive: short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail("archive: cannot rename '" + tmp + "' to '" + path + "'");
}

}  // namespace miassr::io
