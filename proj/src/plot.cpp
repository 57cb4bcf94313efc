#include "odg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "odg/common.hpp"
#include "odg/image.hpp"

namespace odg {

namespace {

struct Rgb {
    double r, g, b;
};

const Rgb kAxis{0.25, 0.25, 0.28};
const Rgb kSeries[4] = {{0.20, 0.45, 0.80}, {0.85, 0.45, 0.15}, {0.30, 0.65, 0.35}, {0.6, 0.3, 0.6}};

// 3x5 glyphs for the characters that appear on tick labels
const char* glyph(char c) {
    switch (c) {
        case '0': return "111101101101111";
        case '1': return "010110010010111";
        case '2': return "111001111100111";
        case '3': return "111001111001111";
        case '4': return "101101111001001";
        case '5': return "111100111001111";
        case '6': return "111100111101111";
        case '7': return "111001010010010";
        case '8': return "111101111101111";
        case '9': return "111101111001111";
        case '.': return "000000000000010";
        case '-': return "000000111000000";
        default: return "000000000000000";
    }
}

struct Canvas {
    Image img;
    explicit Canvas(int h, int w) : img(h, w, 1.0) {}

    void set(int y, int x, const Rgb& c) {
        if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
        img.at(y, x, 0) = c.r;
        img.at(y, x, 1) = c.g;
        img.at(y, x, 2) = c.b;
    }

    void rect(int y0, int x0, int y1, int x1, const Rgb& c) {
        for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
            for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(y, x, c);
    }

    void line(int y0, int x0, int y1, int x1, const Rgb& c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(y0, x0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void text(int y, int x, const std::string& s, const Rgb& c) {
        for (char ch : s) {
            const char* g = glyph(ch);
            for (int r = 0; r < 5; ++r)
                for (int col = 0; col < 3; ++col)
                    if (g[r * 3 + col] == '1') set(y + r, x + col, c);
            x += 4;
        }
    }

    void save(const std::string& path) { write_image(img, path); }
};

std::string fmt_num(double v) {
    char buf[32];
    if (std::fabs(v - std::round(v)) < 1e-9)
        std::snprintf(buf, sizeof(buf), "%.0f", v);
    else
        std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

constexpr int kMarginLeft = 34;
constexpr int kMarginBottom = 18;
constexpr int kMarginTop = 10;
constexpr int kMarginRight = 8;

void draw_axes(Canvas& cv, double y_max) {
    const int h = cv.img.h, w = cv.img.w;
    cv.line(kMarginTop, kMarginLeft, h - kMarginBottom, kMarginLeft, kAxis);
    cv.line(h - kMarginBottom, kMarginLeft, h - kMarginBottom, w - kMarginRight, kAxis);
    for (int tick = 0; tick <= 4; ++tick) {
        const double frac = tick / 4.0;
        const int y = h - kMarginBottom - static_cast<int>(frac * (h - kMarginTop - kMarginBottom));
        cv.line(y, kMarginLeft - 3, y, kMarginLeft, kAxis);
        cv.text(y - 2, 2, fmt_num(frac * y_max), kAxis);
    }
}

}  // namespace

void plot_bars(const std::vector<std::pair<std::string, double>>& bars, double y_max,
               const std::string& path) {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> series;
    std::vector<double> vals;
    for (const auto& [label, v] : bars) {
        labels.push_back(label);
        vals.push_back(v);
    }
    series.push_back(std::move(vals));
    plot_grouped_bars(labels, series, y_max, path);
}

void plot_grouped_bars(const std::vector<std::string>& labels,
                       const std::vector<std::vector<double>>& series, double y_max,
                       const std::string& path) {
    if (labels.empty() || series.empty()) throw ConfigError("plot: nothing to draw");
    const int n_groups = static_cast<int>(labels.size());
    const int n_series = static_cast<int>(series.size());
    const int group_w = std::max(18, 12 * n_series + 8);
    const int w = kMarginLeft + kMarginRight + n_groups * group_w + 10;
    const int h = 160;
    Canvas cv(h, std::max(w, 160));
    draw_axes(cv, y_max);
    const int base = h - kMarginBottom;
    const int span = base - kMarginTop;
    for (int g = 0; g < n_groups; ++g) {
        const int gx = kMarginLeft + 6 + g * group_w;
        for (int s = 0; s < n_series; ++s) {
            const double v = series[static_cast<size_t>(s)][static_cast<size_t>(g)];
            const int bh = static_cast<int>(std::clamp(v / y_max, 0.0, 1.0) * span);
            const int x0 = gx + s * 12;
            cv.rect(base - bh, x0, base - 1, x0 + 9, kSeries[s % 4]);
            cv.text(base - bh - 7, x0, fmt_num(v), kAxis);
        }
        cv.text(base + 4, gx, std::to_string(g), kAxis);
    }
    cv.save(path);
}

void plot_curve(const std::vector<std::pair<double, double>>& points, const std::string& path) {
    if (points.empty()) throw ConfigError("plot: nothing to draw");
    double x_min = points[0].first, x_max = points[0].first, y_max = 1.0;
    for (const auto& [x, y] : points) {
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
        y_max = std::max(y_max, y);
    }
    if (x_max == x_min) x_max = x_min + 1.0;
    y_max *= 1.05;
    const int h = 160, w = 260;
    Canvas cv(h, w);
    draw_axes(cv, y_max);
    const int base = h - kMarginBottom;
    const int span = base - kMarginTop;
    const int x_span = w - kMarginLeft - kMarginRight - 6;
    int py = 0, px = 0;
    for (size_t i = 0; i < points.size(); ++i) {
        const int x = kMarginLeft + 3 +
                      static_cast<int>((points[i].first - x_min) / (x_max - x_min) * x_span);
        const int y = base - static_cast<int>(std::clamp(points[i].second / y_max, 0.0, 1.0) * span);
        cv.rect(y - 1, x - 1, y + 1, x + 1, kSeries[0]);
        if (i > 0) cv.line(py, px, y, x, kSeries[0]);
        cv.text(y - 8, x - 4, fmt_num(points[i].second), kAxis);
        px = x;
        py = y;
    }
    cv.save(path);
}

}  // namespace odg
