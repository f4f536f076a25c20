#include "textar/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "textar/log.hpp"
#include "textar/png_io.hpp"

namespace textar::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t Dataset::total_words() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.layout.boxes.size();
  return n;
}

std::size_t Dataset::total_windows() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.windows.size();
  return n;
}

Dataset from_generated(std::vector<synth::GeneratedDocument> docs, int crop_h, int crop_w) {
  Dataset ds;
  ds.crop_h = crop_h;
  ds.crop_w = crop_w;
  ds.docs.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Document d;
    char name[64];
    std::snprintf(name, sizeof(name), "images/doc_%05zu.png", i);
    d.image_path = name;
    d.layout = std::move(docs[i].layout);
    d.crops = std::move(docs[i].crops);
    ds.docs.push_back(std::move(d));
  }
  return ds;
}

void build_windows(Dataset& ds, int S, double k, double m, std::uint64_t seed) {
  geom::validate_metric_weights(k, m);
  for (std::size_t i = 0; i < ds.docs.size(); ++i) {
    auto& d = ds.docs[i];
    d.windows = geom::sequential_context_windows(
        d.layout, S, k, m, Rng::derive_seed(seed, static_cast<std::uint64_t>(i)));
  }
}

void write_annotations_jsonl(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& d : ds.docs) {
    json words = json::array();
    for (const auto& b : d.layout.boxes) {
      json w = {{"id", b.id}, {"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}}};
      if (b.label) {
        w["t1"] = b.label->t1;
        w["t2"] = b.label->t2;
      } else {
        w["t1"] = nullptr;
        w["t2"] = nullptr;
      }
      words.push_back(std::move(w));
    }
    json line = {{"image", d.image_path},
                 {"width", d.layout.width},
                 {"height", d.layout.height},
                 {"words", std::move(words)}};
    os << line.dump() << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

Dataset read_annotations_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Document d;
    d.image_path = j.at("image").get<std::string>();
    d.layout.width = j.at("width").get<int>();
    d.layout.height = j.at("height").get<int>();
    for (const auto& w : j.at("words")) {
      geom::WordBox b;
      b.id = w.at("id").get<int>();
      const auto& bb = w.at("bbox");
      if (bb.size() != 4)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bbox needs 4 values");
      b.x_min = bb[0].get<double>();
      b.y_min = bb[1].get<double>();
      b.x_max = bb[2].get<double>();
      b.y_max = bb[3].get<double>();
      if (!w.at("t1").is_null() && !w.at("t2").is_null()) {
        AttributeLabel lab;
        lab.t1 = w.at("t1").get<int>();
        lab.t2 = w.at("t2").get<int>();
        if (lab.t1 < 0 || lab.t1 > 3 || lab.t2 < 0 || lab.t2 > 3)
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": label out of range");
        b.label = lab;
      }
      d.layout.boxes.push_back(b);
    }
    geom::validate_layout(d.layout);
    ds.docs.push_back(std::move(d));
  }
  return ds;
}

void write_windows_jsonl(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& d : ds.docs) {
    for (const auto& w : d.windows) {
      json line = {{"doc", d.image_path},
                   {"anchor", w.anchor_id},
                   {"members", w.members},
                   {"mask", w.padding_mask}};
      os << line.dump() << "\n";
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

void read_windows_jsonl(const std::string& path, Dataset& ds) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::map<std::string, Document*> by_path;
  for (auto& d : ds.docs) {
    d.windows.clear();
    by_path[d.image_path] = &d;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto doc_path = j.at("doc").get<std::string>();
    auto it = by_path.find(doc_path);
    if (it == by_path.end())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": window references unknown document " + doc_path);
    Document& d = *it->second;
    geom::ContextWindow w;
    w.anchor_id = j.at("anchor").get<int>();
    w.members = j.at("members").get<std::vector<int>>();
    w.padding_mask = j.at("mask").get<std::vector<bool>>();
    if (w.members.size() != w.padding_mask.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": members/mask mismatch");
    w.positions.resize(w.members.size(), NormalizedPosition{});
    for (std::size_t s = 0; s < w.members.size(); ++s) {
      const int id = w.members[s];
      if (!w.padding_mask[s]) continue;
      if (id < 0 || id >= static_cast<int>(d.layout.boxes.size()))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": member id out of range");
      w.positions[s] = geom::normalize_center(d.layout.boxes[id], d.layout);
    }
    d.windows.push_back(std::move(w));
  }
}

void write_crop_archive(const std::string& path, const std::vector<Image>& crops) {
  if (crops.empty()) throw std::invalid_argument("crop archive: no crops");
  const int h = crops[0].h, w = crops[0].w;
  for (const auto& c : crops)
    if (c.h != h || c.w != w) throw std::invalid_argument("crop archive: mixed crop sizes");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write("TXCR", 4);
  const std::uint32_t hdr[3] = {static_cast<std::uint32_t>(crops.size()),
                                static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
  os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  std::vector<float> row(static_cast<std::size_t>(h) * w);
  for (const auto& c : crops) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(c.pix[i]);
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<Image> read_crop_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "TXCR")
    throw std::runtime_error("crop archive: bad magic: " + path);
  std::uint32_t hdr[3];
  is.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!is) throw std::runtime_error("crop archive: truncated header: " + path);
  const int count = static_cast<int>(hdr[0]), h = static_cast<int>(hdr[1]),
            w = static_cast<int>(hdr[2]);
  if (count <= 0 || h <= 0 || w <= 0) throw std::runtime_error("crop archive: bad header");
  std::vector<Image> crops;
  crops.reserve(count);
  std::vector<float> row(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < count; ++i) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw std::runtime_error("crop archive: truncated payload: " + path);
    Image im(h, w);
    for (std::size_t p = 0; p < row.size(); ++p) im.pix[p] = row[p];
    crops.push_back(std::move(im));
  }
  return crops;
}

namespace {

std::string crop_archive_path(const std::string& image_path) {
  const fs::path img(image_path);
  return (fs::path("crops") / img.stem()).string() + ".bin";
}

}  // namespace

void load_crops(Dataset& ds, const std::string& root) {
  for (auto& d : ds.docs) {
    const fs::path bin = fs::path(root) / crop_archive_path(d.image_path);
    if (fs::exists(bin)) {
      d.crops = read_crop_archive(bin.string());
      if (d.crops.size() != d.layout.boxes.size())
        throw std::runtime_error("crop count mismatch for " + d.image_path);
      continue;
    }
    const fs::path png_path = fs::path(root) / d.image_path;
    TEXTAR_LOG_DEBUG("no crop archive for %s, cutting from page", d.image_path.c_str());
    const Image page = png::read_gray8(png_path.string());
    d.crops.clear();
    d.crops.reserve(d.layout.boxes.size());
    for (const auto& b : d.layout.boxes)
      d.crops.push_back(synth::extract_crop(page, b, ds.crop_h, ds.crop_w));
  }
}

void write_dataset(const std::string& root, const Dataset& ds,
                   const std::vector<Image>& pages) {
  if (pages.size() != ds.docs.size())
    throw std::invalid_argument("write_dataset: one page per document required");
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "crops");
  for (std::size_t i = 0; i < ds.docs.size(); ++i) {
    const auto& d = ds.docs[i];
    png::write_gray8((fs::path(root) / d.image_path).string(), pages[i]);
    if (!d.crops.empty())
      write_crop_archive((fs::path(root) / crop_archive_path(d.image_path)).string(), d.crops);
  }
  write_annotations_jsonl((fs::path(root) / "annotations.jsonl").string(), ds);
  if (ds.total_windows() > 0)
    write_windows_jsonl((fs::path(root) / "windows.jsonl").string(), ds);
}

std::vector<WindowRef> all_windows(const Dataset& ds) {
  std::vector<WindowRef> refs;
  for (int d = 0; d < static_cast<int>(ds.docs.size()); ++d)
    for (int w = 0; w < static_cast<int>(ds.docs[d].windows.size()); ++w)
      refs.push_back({d, w});
  return refs;
}

model::WindowBatch make_batch(const Dataset& ds, const std::vector<WindowRef>& refs,
                              const synth::AugmentPolicy* aug, Rng* rng) {
  if (refs.empty()) throw std::invalid_argument("make_batch: empty batch");
  if (aug && !rng) throw std::invalid_argument("make_batch: augmentation needs an rng");
  const int B = static_cast<int>(refs.size());
  int S = -1;
  for (const auto& r : refs) {
    const auto& w = ds.docs.at(r.doc).windows.at(r.win);
    if (S < 0) S = static_cast<int>(w.members.size());
    if (static_cast<int>(w.members.size()) != S)
      throw std::invalid_argument("make_batch: mixed window sizes");
  }

  model::WindowBatch batch;
  batch.crops = Tensor::zeros({B, S, 1, ds.crop_h, ds.crop_w});
  batch.positions.assign(B, std::vector<NormalizedPosition>(S));
  batch.mask.assign(B, std::vector<bool>(S, false));
  batch.labels_t1.assign(B, std::vector<int>(S, -1));
  batch.labels_t2.assign(B, std::vector<int>(S, -1));

  for (int bi = 0; bi < B; ++bi) {
    const auto& doc = ds.docs[refs[bi].doc];
    const auto& win = doc.windows[refs[bi].win];
    if (doc.crops.size() != doc.layout.boxes.size())
      throw std::runtime_error("make_batch: crops not loaded for " + doc.image_path);
    for (int s = 0; s < S; ++s) {
      batch.positions[bi][s] = win.positions[s];
      if (!win.padding_mask[s]) continue;
      batch.mask[bi][s] = true;
      const int id = win.members[s];
      const auto& box = doc.layout.boxes.at(id);
      if (box.label) {
        batch.labels_t1[bi][s] = box.label->t1;
        batch.labels_t2[bi][s] = box.label->t2;
      }
      Image crop = doc.crops.at(id);
      if (crop.h != ds.crop_h || crop.w != ds.crop_w)
        crop = img::resize_bilinear(crop, ds.crop_h, ds.crop_w);
      if (aug) {
        synth::WordCrop wc{std::move(crop), AttributeLabel{}};
        crop = synth::augment(wc, *aug, *rng).pixels;
      }
      const std::size_t off = (static_cast<std::size_t>(bi) * S + s) *
                              static_cast<std::size_t>(ds.crop_h) * ds.crop_w;
      std::copy(crop.pix.begin(), crop.pix.end(), batch.crops.v.begin() + off);
    }
  }
  return batch;
}

}  // namespace textar::data
