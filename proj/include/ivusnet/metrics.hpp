// Copyright 2026 The ivusnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file
// except in compliance with the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ivusnet/ellipse.hpp"
#include "ivusnet/errors.hpp"
#include "ivusnet/image.hpp"
#include "ivusnet/postprocess.hpp"

namespace ivus {

/// Intersection over union of the foreground sets. Two empty masks score 1.
inline double jaccard(const BinaryMask& pred, const BinaryMask& truth) {
  if (!pred.same_dims(truth))
    throw ContractError("jaccard on masks of different size: " + std::to_string(pred.width) + "x" +
                        std::to_string(pred.height) + " vs " + std::to_string(truth.width) + "x" +
                        std::to_string(truth.height));
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.pixels[i] != 0, t = truth.pixels[i] != 0;
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// max over a in A of the distance from a to its nearest point of B.
inline double directed_hausdorff(std::span<const Point> a, std::span<const Point> b) {
  if (a.empty() || b.empty()) throw ContractError("hausdorff distance of an empty contour");
  double worst = 0.0;  // squared
  for (const auto& p : a) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      const double dx = p.x - q.x, dy = p.y - q.y;
      nearest = std::min(nearest, dx * dx + dy * dy);
      if (nearest <= worst) break;  // p cannot raise the maximum
    }
    worst = std::max(worst, nearest);
  }
  return std::sqrt(worst);
}

inline double hausdorff(std::span<const Point> a, std::span<const Point> b, double spacing_mm = 1.0) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a)) * spacing_mm;
}

/// Final segmentation of one target in one frame.
struct TargetPrediction {
  BinaryMask mask;     // ellipse mask
  Contour contour;     // ellipse contour
  Contour raw_contour; // boundary before ellipse fitting; may be empty
};

struct FramePrediction {
  std::optional<TargetPrediction> lumen;
  std::optional<TargetPrediction> media;

  const std::optional<TargetPrediction>& get(Target t) const { return t == Target::lumen ? lumen : media; }
  std::optional<TargetPrediction>& get(Target t) { return t == Target::lumen ? lumen : media; }
};

/// A frame with its ground truth and predictions, as consumed by evaluate().
struct EvalFrame {
  std::string id;
  Category category = Category::none;
  BinaryMask lumen_truth;
  BinaryMask media_truth;
  FramePrediction pred;
};

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // population

  static Summary of(const std::vector<double>& v) {
    Summary s;
    s.n = v.size();
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size()));
    return s;
  }
};

struct EvalRow {
  std::size_t n = 0;
  Summary jm;
  Summary hd;
  std::optional<Summary> hd_raw;  // present when every frame of the row has a raw contour
};

/// Row 0 aggregates all frames; rows 1..4 follow kCategories.
struct EvalReport {
  double pixel_spacing_mm = 1.0;
  std::array<std::array<EvalRow, 5>, 2> rows;  // [target][row]

  const EvalRow& row(Target t, std::size_t r) const { return rows[t == Target::lumen ? 0 : 1][r]; }
};

inline constexpr std::array<const char*, 5> kRowLabels = {"All", "No Artifact", "Bifurcation",
                                                          "Side Vessels", "Shadow"};
inline constexpr std::array<const char*, 5> kRowKeys = {"all", "none", "bifurcation", "side_vessel",
                                                        "shadow"};

inline EvalReport evaluate(std::span<const EvalFrame> frames, double spacing_mm = 1.0) {
  EvalReport rep;
  rep.pixel_spacing_mm = spacing_mm;
  for (Target t : {Target::lumen, Target::media}) {
    std::array<std::vector<double>, 5> jm, hd, hd_raw;
    std::array<bool, 5> raw_complete;
    raw_complete.fill(true);
    for (const auto& f : frames) {
      const auto& p = f.pred.get(t);
      if (!p) throw ContractError("frame " + f.id + " has no " + std::string(to_string(t)) + " prediction");
      const BinaryMask& truth = t == Target::lumen ? f.lumen_truth : f.media_truth;
      const Contour truth_contour = trace_boundary(truth);
      const double j = jaccard(p->mask, truth);
      const double h = hausdorff(p->contour, truth_contour, spacing_mm);
      const std::size_t cat = 1 + static_cast<std::size_t>(f.category);
      for (std::size_t r : {std::size_t{0}, cat}) {
        jm[r].push_back(j);
        hd[r].push_back(h);
        if (p->raw_contour.empty())
          raw_complete[r] = false;
        else
          hd_raw[r].push_back(hausdorff(p->raw_contour, truth_contour, spacing_mm));
      }
    }
    for (std::size_t r = 0; r < 5; ++r) {
      EvalRow& row = rep.rows[t == Target::lumen ? 0 : 1][r];
      row.n = jm[r].size();
      row.jm = Summary::of(jm[r]);
      row.hd = Summary::of(hd[r]);
      if (row.n > 0 && raw_complete[r]) row.hd_raw = Summary::of(hd_raw[r]);
    }
  }
  return rep;
}

/// Loads truth masks for `records` and pairs them with `preds` by index.
inline EvalReport evaluate(const std::vector<FrameRecord>& records,
                           const std::vector<FramePrediction>& preds, double spacing_mm = 1.0) {
  if (preds.size() != records.size())
    throw ContractError("have " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(records.size()) + " frames");
  std::vector<EvalFrame> frames;
  frames.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    frames.push_back({std::to_string(i) + " (" + records[i].image_path.string() + ")", records[i].category,
                      read_mask(records[i].lumen_mask_path), read_mask(records[i].media_mask_path),
                      preds[i]});
  }
  return evaluate(frames, spacing_mm);
}

inline std::string mean_std(const Summary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f (%.2f)", s.mean, s.std);
  return buf;
}

/// Plain-text table: one row per non-empty category, JM and HD per target.
inline std::string render_report(const EvalReport& rep) {
  std::ostringstream os;
  const std::string unit = rep.pixel_spacing_mm == 1.0 ? "px" : "mm";
  auto line = [&](const std::string& label, const std::string& n, const std::array<std::string, 4>& cells) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %4s  %-13s %-13s  %-13s %-13s\n", label.c_str(), n.c_str(),
                  cells[0].c_str(), cells[1].c_str(), cells[2].c_str(), cells[3].c_str());
    os << buf;
  };
  line("", "", {"Lumen", "", "Media", ""});
  line("Category", "n", {"JM", "HD (" + unit + ")", "JM", "HD (" + unit + ")"});
  for (std::size_t r = 0; r < 5; ++r) {
    const auto& l = rep.row(Target::lumen, r);
    const auto& m = rep.row(Target::media, r);
    if (l.n == 0) continue;
    line(kRowLabels[r], std::to_string(l.n), {mean_std(l.jm), mean_std(l.hd), mean_std(m.jm), mean_std(m.hd)});
  }
  bool any_raw = false;
  for (std::size_t r = 0; r < 5; ++r)
    any_raw = any_raw || rep.row(Target::lumen, r).hd_raw || rep.row(Target::media, r).hd_raw;
  if (any_raw) {
    os << "\nHD before ellipse fitting (" << unit << ")\n";
    for (std::size_t r = 0; r < 5; ++r) {
      const auto& l = rep.row(Target::lumen, r);
      const auto& m = rep.row(Target::media, r);
      if (l.n == 0) continue;
      line(kRowLabels[r], std::to_string(l.n),
           {l.hd_raw ? mean_std(*l.hd_raw) : "-", "", m.hd_raw ? mean_std(*m.hd_raw) : "-", ""});
    }
  }
  if (rep.pixel_spacing_mm != 1.0) os << "\npixel spacing: " << rep.pixel_spacing_mm << " mm\n";
  return os.str();
}

inline std::string report_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "target,category,n,jm_mean,jm_std,hd_mean,hd_std\n";
  os.precision(17);
  for (Target t : {Target::lumen, Target::media})
    for (std::size_t r = 0; r < 5; ++r) {
      const auto& row = rep.row(t, r);
      if (row.n == 0) continue;
      os << to_string(t) << ',' << kRowKeys[r] << ',' << row.n << ',' << row.jm.mean << ',' << row.jm.std
         << ',' << row.hd.mean << ',' << row.hd.std << '\n';
    }
  return os.str();
}

}  // namespace ivus
