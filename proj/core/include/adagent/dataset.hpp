#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "adagent/scoring.hpp"

namespace adagent::eval {

enum class DatasetLayout { mvtec_dirs, manifest_csv };

DatasetLayout layout_from_string(const std::string& s);

struct DatasetItem {
  std::filesystem::path path;
  std::string class_name;
  BinaryLabel label;
  std::string split;     // "train" | "test"
  std::string image_id;  // filesystem-safe, unique within the class
};

struct DatasetManifest {
  std::string name;
  std::vector<DatasetItem> test_items;
  // Per-class train-good pool in seeded order; shots(k) is its prefix, so
  // 1-shot subset of 2-shot subset of 4-shot by construction.
  std::map<std::string, std::vector<std::filesystem::path>> shot_pool;
  unsigned seed = 0;

  std::vector<std::string> classes() const;
  std::vector<std::filesystem::path> shots(const std::string& class_name, int k) const;
};

// mvtec_dirs: <root>/<class>/test/good -> label 0, <root>/<class>/test/<defect>
// -> label 1, <root>/<class>/train/good -> shot pool.
// manifest_csv: root is a CSV file with rows path,class,label,split.
// Every listed image is decode-checked; unreadable files are excluded with a
// warning on stderr.
DatasetManifest load_dataset(const std::filesystem::path& root, DatasetLayout layout,
                             unsigned seed);

}  // namespace adagent::eval
