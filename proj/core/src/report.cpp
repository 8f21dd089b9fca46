#include "s3l/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "s3l/common.hpp"

namespace fs = std::filesystem;

namespace s3l {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt2(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string runs_to_csv(const std::vector<RunReport>& runs) {
    std::ostringstream os;
    os << "method,plan,macs,wall_seconds,acc_normal,acc_mixup\n";
    for (const auto& r : runs)
        os << r.method << "," << r.plan << "," << fmt_double(r.macs) << ","
           << fmt_double(r.wall_seconds) << "," << fmt_double(r.acc_normal) << ","
           << fmt_double(r.acc_mixup) << "\n";
    return os.str();
}

std::vector<RunReport> parse_runs_csv(const fs::path& path) {
    std::ifstream in(path);
    S3L_CHECK(in.good(), "parse_runs_csv: cannot open ", path.string());
    std::string line;
    S3L_CHECK(std::getline(in, line), "parse_runs_csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    S3L_CHECK(line == "method,plan,macs,wall_seconds,acc_normal,acc_mixup",
              "parse_runs_csv: unexpected header: ", line);
    std::vector<RunReport> runs;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream is(line);
        RunReport r;
        std::string field;
        std::getline(is, r.method, ',');
        std::getline(is, r.plan, ',');
        std::getline(is, field, ',');
        r.macs = std::stod(field);
        std::getline(is, field, ',');
        r.wall_seconds = std::stod(field);
        std::getline(is, field, ',');
        r.acc_normal = std::stod(field);
        std::getline(is, field, ',');
        r.acc_mixup = std::stod(field);
        runs.push_back(std::move(r));
    }
    return runs;
}

void emit_report(const std::vector<RunReport>& runs, const fs::path& out_dir) {
    S3L_CHECK(!runs.empty(), "emit_report: need at least one run");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    S3L_CHECK(fs::is_directory(out_dir), "emit_report: cannot create ", out_dir.string());

    {
        std::ofstream out(out_dir / "runs.csv", std::ios::trunc);
        S3L_CHECK(out.good(), "emit_report: cannot write runs.csv");
        out << runs_to_csv(runs);
    }

    // scatter: x = wall seconds, y = best accuracy (fraction)
    const int width = 640, height = 480;
    const int ml = 64, mr = 24, mt = 24, mb = 48;
    double xmax = 1e-9, ymax = 1e-9;
    for (const auto& r : runs) {
        xmax = std::max(xmax, r.wall_seconds);
        ymax = std::max(ymax, std::max(r.acc_normal, r.acc_mixup));
    }
    xmax *= 1.08;
    ymax = std::min(1.0, ymax * 1.15);
    if (ymax <= 0) ymax = 1.0;

    auto sx = [&](double v) { return ml + v / xmax * (width - ml - mr); };
    auto sy = [&](double v) { return height - mb - v / ymax * (height - mt - mb); };

    std::map<std::string, const char*> color;
    int next_color = 0;
    for (const auto& r : runs)
        if (!color.count(r.method))
            color[r.method] = kColors[next_color++ % (sizeof(kColors) / sizeof(kColors[0]))];

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"#ffffff\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
        << "\" y2=\"" << height - mb << "\" stroke=\"#222222\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << height - mb << "\" stroke=\"#222222\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double xv = xmax * i / 4.0;
        double yv = ymax * i / 4.0;
        svg << "<text x=\"" << fmt2(sx(xv)) << "\" y=\"" << height - mb + 18
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << fmt2(xv)
            << "</text>\n";
        svg << "<text x=\"" << ml - 6 << "\" y=\"" << fmt2(sy(yv) + 4)
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt2(yv)
            << "</text>\n";
    }
    svg << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 10
        << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">wall seconds"
        << "</text>\n";
    svg << "<text x=\"16\" y=\"" << (mt + height - mb) / 2
        << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 16 "
        << (mt + height - mb) / 2 << ")\">accuracy</text>\n";

    for (const auto& r : runs) {
        double acc = std::max(r.acc_normal, r.acc_mixup);
        if (acc < 0) acc = 0;
        svg << "<circle class=\"run\" cx=\"" << fmt2(sx(r.wall_seconds)) << "\" cy=\""
            << fmt2(sy(acc)) << "\" r=\"5\" fill=\"" << color[r.method]
            << "\" fill-opacity=\"0.85\"><title>" << r.method << " " << r.plan << "</title></circle>\n";
    }

    int ly = mt + 8;
    for (const auto& [method, col] : color) {
        svg << "<circle cx=\"" << width - mr - 110 << "\" cy=\"" << ly << "\" r=\"5\" fill=\"" << col
            << "\"/>\n";
        svg << "<text x=\"" << width - mr - 100 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << method << "</text>\n";
        ly += 18;
    }
    svg << "</svg>\n";

    std::ofstream out(out_dir / "scatter.svg", std::ios::trunc);
    S3L_CHECK(out.good(), "emit_report: cannot write scatter.svg");
    out << svg.str();
}

}  // namespace s3l
