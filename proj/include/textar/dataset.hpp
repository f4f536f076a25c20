#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textar/geometry.hpp"
#include "textar/image.hpp"
#include "textar/model.hpp"
#include "textar/rng.hpp"
#include "textar/synthdoc.hpp"

namespace textar::data {

struct Document {
  std::string image_path;  // relative to the dataset root; also the report key
  geom::DocumentLayout layout;
  std::vector<Image> crops;                   // per word id; empty until loaded
  std::vector<geom::ContextWindow> windows;   // empty until built
};

struct Dataset {
  std::vector<Document> docs;
  int crop_h = 32;
  int crop_w = 24;

  std::size_t total_words() const;
  std::size_t total_windows() const;
};

// In-memory adoption of generated documents (no files involved).
Dataset from_generated(std::vector<synth::GeneratedDocument> docs, int crop_h, int crop_w);

// One covering window set per document; document i uses Rng::derive(seed, i).
void build_windows(Dataset& ds, int S, double k, double m, std::uint64_t seed);

// Annotations: one JSON object per line,
//   {"image", "width", "height", "words": [{"id", "bbox", "t1", "t2"}]}
// with t1/t2 null for unlabeled words. bbox is [x_min, y_min, x_max, y_max].
void write_annotations_jsonl(const std::string& path, const Dataset& ds);
Dataset read_annotations_jsonl(const std::string& path);

// Windows: {"doc", "anchor", "members", "mask"}; members hold -1 in padded
// slots. Positions are recomputed from the layout on read.
void write_windows_jsonl(const std::string& path, const Dataset& ds);
void read_windows_jsonl(const std::string& path, Dataset& ds);

// Packed crop archive: "TXCR", u32 count/h/w, then count*h*w float32
// row-major. The compact storage form for per-word crops.
void write_crop_archive(const std::string& path, const std::vector<Image>& crops);
std::vector<Image> read_crop_archive(const std::string& path);

// Fills Document::crops for every doc. Prefers crops/<stem>.bin under root;
// falls back to reading the page PNG and cutting crops from the boxes.
void load_crops(Dataset& ds, const std::string& root);

// Writes the standard on-disk layout under root: images/, crops/,
// annotations.jsonl (and windows.jsonl when windows are present).
void write_dataset(const std::string& root, const Dataset& ds,
                   const std::vector<Image>& pages);

struct WindowRef {
  int doc = 0;
  int win = 0;
};

std::vector<WindowRef> all_windows(const Dataset& ds);

// Assembles a model batch from window references. Unlabeled words keep their
// attention mask but get label -1, which the loss ignores. aug/rng enable
// train-time crop augmentation.
model::WindowBatch make_batch(const Dataset& ds, const std::vector<WindowRef>& refs,
                              const synth::AugmentPolicy* aug = nullptr, Rng* rng = nullptr);

}  // namespace textar::data
