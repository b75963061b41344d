/* Copyright 2026 The Dualshift Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Static SVG bar chart of the evaluation matrix: one bar group per dataset
// variant, one bar per defense, mean accuracy with a std whisker.

#ifndef DUALSHIFT_SVG_CHART_HPP
#define DUALSHIFT_SVG_CHART_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/eval.hpp"

namespace dualshift {

inline void write_accuracy_chart_svg(const EvalReport& report,
                                     const std::filesystem::path& path) {
  std::vector<std::string> variants, defenses;
  for (const auto& a : report.aggregates) {
    if (std::find(variants.begin(), variants.end(), a.variant) == variants.end())
      variants.push_back(a.variant);
    if (std::find(defenses.begin(), defenses.end(), a.defense) == defenses.end())
      defenses.push_back(a.defense);
  }
  std::map<std::pair<std::string, std::string>, const EvalAggregate*> lookup;
  for (const auto& a : report.aggregates) lookup[{a.variant, a.defense}] = &a;

  static const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
                                   "#59a14f", "#edc948", "#b07aa1", "#9c755f"};
  const int bar_w = 26, bar_gap = 6, group_gap = 40;
  const int plot_h = 280, margin_l = 56, margin_t = 30, margin_b = 90;
  const int group_w =
      static_cast<int>(defenses.size()) * (bar_w + bar_gap) - bar_gap + group_gap;
  const int width = margin_l + group_w * static_cast<int>(variants.size()) + 220;
  const int height = margin_t + plot_h + margin_b;

  std::ofstream out(path);
  if (!out) throw IoError("write_accuracy_chart_svg: cannot open " + path.string());
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' font-family='sans-serif' font-size='12'>\n";
  out << "<text x='" << margin_l << "' y='18' font-size='14'>Victim test accuracy (%) per "
         "variant and defense</text>\n";

  // Axis and gridlines.
  for (int tick = 0; tick <= 100; tick += 20) {
    const double y = margin_t + plot_h - plot_h * tick / 100.0;
    out << "<line x1='" << margin_l << "' y1='" << y << "' x2='" << width - 10 << "' y2='" << y
        << "' stroke='#dddddd'/>\n";
    out << "<text x='" << margin_l - 8 << "' y='" << y + 4 << "' text-anchor='end'>" << tick
        << "</text>\n";
  }

  int gx = margin_l;
  for (const auto& variant : variants) {
    int bx = gx;
    for (std::size_t d = 0; d < defenses.size(); ++d) {
      auto it = lookup.find({variant, defenses[d]});
      if (it != lookup.end()) {
        const EvalAggregate& a = *it->second;
        const double h = plot_h * a.mean / 100.0;
        const double y0 = margin_t + plot_h - h;
        out << "<rect x='" << bx << "' y='" << y0 << "' width='" << bar_w << "' height='" << h
            << "' fill='" << kPalette[d % 8] << "'/>\n";
        if (a.stddev > 0.0) {
          const double e = plot_h * a.stddev / 100.0;
          const double cx = bx + bar_w / 2.0;
          out << "<line x1='" << cx << "' y1='" << y0 - e << "' x2='" << cx << "' y2='"
              << std::min(double(margin_t + plot_h), y0 + e) << "' stroke='#333333'/>\n";
        }
        out << "<text x='" << bx + bar_w / 2.0 << "' y='" << y0 - 4
            << "' text-anchor='middle' font-size='10'>" << static_cast<int>(a.mean + 0.5)
            << "</text>\n";
      }
      bx += bar_w + bar_gap;
    }
    const double cx = gx + (bx - gx - bar_gap) / 2.0;
    out << "<text x='" << cx << "' y='" << margin_t + plot_h + 16
        << "' text-anchor='middle'>" << variant << "</text>\n";
    gx += group_w;
  }

  // Legend.
  int ly = margin_t;
  const int lx = width - 200;
  for (std::size_t d = 0; d < defenses.size(); ++d) {
    out << "<rect x='" << lx << "' y='" << ly << "' width='12' height='12' fill='"
        << kPalette[d % 8] << "'/>\n";
    out << "<text x='" << lx + 18 << "' y='" << ly + 10 << "'>" << defenses[d] << "</text>\n";
    ly += 18;
  }
  out << "<line x1='" << margin_l << "' y1='" << margin_t + plot_h << "' x2='" << width - 10
      << "' y2='" << margin_t + plot_h << "' stroke='#000000'/>\n";
  out << "</svg>\n";
}

}  // namespace dualshift

#endif  // DUALSHIFT_SVG_CHART_HPP
