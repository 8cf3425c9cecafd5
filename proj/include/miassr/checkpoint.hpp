#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "miassr/tensor.hpp"

namespace miassr::io {

// A named-tensor archive with string metadata.  On disk this is the
// safetensors layout: an 8-byte little-endian header length, a JSON header
// mapping each tensor name to {dtype, shape, data_offsets} plus an optional
// "__metadata__" string map, then the raw data section.  Tensors are stored
// sorted by name and the JSON keys are emitted in sorted order, so equal
// archives produce bit-identical files.
struct Archive {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> metadata;

  const Tensor* find(const std::string& name) const;
  const Tensor& require(const std::string& name) const;
  bool has(const std::string& name) const;
  void put(const std::string& name, Tensor t);

  std::string meta(const std::string& key, const std::string& fallback = "") const;
};

// Serializes to bytes / parses from bytes (exposed for tests).
std::string archive_bytes(const Archive& a);
Archive parse_archive(const std::string& bytes, const std::string& origin = "<memory>");

Archive read_archive(const std::string& path);

// Writes to "<path>.tmp" and renames into place, so a crash mid-write never
// clobbers an existing good file.
void write_archive_atomic(const std::string& path, const Archive& a);

}  // namespace miassr::io
