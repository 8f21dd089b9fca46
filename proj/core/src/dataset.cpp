#include "s3l/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "s3l/common.hpp"

namespace fs = std::filesystem;

namespace s3l {

std::vector<size_t> Manifest::indices(Split split) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].split == split) out.push_back(i);
    return out;
}

std::vector<int> Manifest::per_class_counts(Split split) const {
    std::vector<int> counts(static_cast<size_t>(num_classes()), 0);
    for (const auto& r : records)
        if (r.split == split) counts[static_cast<size_t>(r.label)]++;
    return counts;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace

Manifest load_manifest(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    S3L_CHECK(in.good(), "load_manifest: cannot open ", csv_path.string());

    Manifest m;
    m.root = csv_path.parent_path();
    std::vector<std::pair<int, std::string>> class_rows;
    std::string line;
    bool header_seen = false;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto fields = split_csv_line(line.substr(1));
            if (fields.size() == 3 && fields[0] == "class")
                class_rows.emplace_back(std::stoi(fields[1]), fields[2]);
            continue;
        }
        if (!header_seen) {
            S3L_CHECK(line.rfind("path,label,split", 0) == 0,
                      "load_manifest: bad header at line ", line_no, ": ", line);
            header_seen = true;
            continue;
        }
        auto fields = split_csv_line(line);
        S3L_CHECK(fields.size() == 3 || fields.size() == 7,
                  "load_manifest: want 3 or 7 fields at line ", line_no);
        ManifestRecord r;
        r.path = fields[0];
        r.label = std::stoi(fields[1]);
        if (fields[2] == "train")
            r.split = Split::Train;
        else if (fields[2] == "test")
            r.split = Split::Test;
        else
            throw Error("load_manifest: unknown split '" + fields[2] + "' at line " +
                        std::to_string(line_no));
        if (fields.size() == 7)
            r.box = Box{std::stoi(fields[3]), std::stoi(fields[4]), std::stoi(fields[5]),
                                std::stoi(fields[6])};
        m.records.push_back(std::move(r));
    }
    S3L_CHECK(header_seen, "load_manifest: missing header");
    S3L_CHECK(!m.records.empty(), "load_manifest: no records");

    // labels dense in [0, C)
    std::set<int> labels;
    for (const auto& r : m.records) labels.insert(r.label);
    int max_label = *labels.rbegin();
    S3L_CHECK(*labels.begin() == 0 && static_cast<int>(labels.size()) == max_label + 1,
              "load_manifest: labels not dense in [0, C)");

    m.class_names.resize(labels.size());
    for (size_t i = 0; i < m.class_names.size(); ++i) m.class_names[i] = "class_" + std::to_string(i);
    for (const auto& [id, name] : class_rows) {
        S3L_CHECK(id >= 0 && id <= max_label, "load_manifest: class row id out of range");
        m.class_names[static_cast<size_t>(id)] = name;
    }

    // splits disjoint; paths exist
    std::set<std::string> train_paths, test_paths;
    for (const auto& r : m.records) {
        (r.split == Split::Train ? train_paths : test_paths).insert(r.path);
        S3L_CHECK(fs::exists(m.root / r.path), "load_manifest: dangling path ", r.path);
    }
    for (const auto& p : train_paths)
        S3L_CHECK(!test_paths.count(p), "load_manifest: splits overlap at ", p);
    return m;
}

void save_manifest(const Manifest& manifest, const fs::path& csv_path) {
    std::ofstream out(csv_path, std::ios::trunc);
    S3L_CHECK(out.good(), "save_manifest: cannot write ", csv_path.string());
    for (size_t i = 0; i < manifest.class_names.size(); ++i)
        out << "#class," << i << "," << manifest.class_names[i] << "\n";
    bool boxes = false;
    for (const auto& r : manifest.records) boxes |= r.box.has_value();
    out << (boxes ? "path,label,split,x0,y0,x1,y1" : "path,label,split") << "\n";
    for (const auto& r : manifest.records) {
        out << r.path << "," << r.label << "," << (r.split == Split::Train ? "train" : "test");
        if (boxes) {
            const auto& b = r.box.value();
            out << "," << b.x0 << "," << b.y0 << "," << b.x1 << "," << b.y1;
        }
        out << "\n";
    }
}

// ---- PPM -------------------------------------------------------------------

namespace {

int ppm_next_int(std::istream& in) {
    // skips whitespace and '#' comments per the PNM grammar
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string junk;
            std::getline(in, junk);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    in >> v;
    S3L_CHECK(in.good(), "decode_image: malformed PPM header");
    return v;
}

}  // namespace

Tensor decode_image(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    S3L_CHECK(in.good(), "decode_image: cannot open ", path.string());
    char magic[2];
    in.read(magic, 2);
    S3L_CHECK(in.good() && magic[0] == 'P' && magic[1] == '6',
              "decode_image: not a binary PPM (P6): ", path.string());
    int w = ppm_next_int(in);
    int h = ppm_next_int(in);
    int maxval = ppm_next_int(in);
    S3L_CHECK(w >= 1 && h >= 1, "decode_image: bad dimensions");
    S3L_CHECK(maxval == 255, "decode_image: maxval must be 255, got ", maxval);
    in.get();  // single whitespace after maxval

    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    S3L_CHECK(in.gcount() == static_cast<std::streamsize>(raw.size()),
              "decode_image: truncated payload in ", path.string());

    Tensor img = Tensor::zeros({3, h, w});
    float* data = img.f32();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                data[(c * h + y) * w + x] =
                    static_cast<float>(raw[(static_cast<size_t>(y) * w + x) * 3 +
                                           static_cast<size_t>(c)]) /
                    255.0f;
    return img;
}

void encode_image(const Tensor& img, const fs::path& path) {
    S3L_CHECK(img.defined() && img.rank() == 3 && img.dim(0) == 3, "encode_image: want [3,H,W]");
    int64_t h = img.dim(1), w = img.dim(2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    S3L_CHECK(out.good(), "encode_image: cannot write ", path.string());
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(h) * w * 3);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                double v = img.get((c * h + y) * w + x);
                long q = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0);
                raw[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)] =
                    static_cast<unsigned char>(q);
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    S3L_CHECK(out.good(), "encode_image: write failed for ", path.string());
}

// ---- synthetic -------------------------------------------------------------

void SyntheticSpec::validate() const {
    S3L_CONFIG_CHECK(classes >= 2 && classes <= 20, "synthetic.classes: want 2..20");
    S3L_CONFIG_CHECK(per_class_train >= 1 && per_class_test >= 1,
                     "synthetic: per-class counts must be positive");
    S3L_CONFIG_CHECK(image_size >= 16, "synthetic.image_size: want >= 16");
}

int synthetic_quadrant(int label) { return label % 4; }

namespace {

struct Rgb {
    int r, g, b;
};

constexpr Rgb kPalette[5] = {
    {220, 30, 30}, {30, 200, 40}, {40, 60, 220}, {230, 200, 30}, {200, 40, 200}};

// Integer-only rasterization so the files are byte-exact across platforms.
void render_synthetic(std::vector<unsigned char>& px, int size, int label, SeededRng& rng,
                      Box* box) {
    auto put = [&](int x, int y, int r, int g, int b) {
        size_t i = (static_cast<size_t>(y) * size + x) * 3;
        px[i] = static_cast<unsigned char>(r);
        px[i + 1] = static_cast<unsigned char>(g);
        px[i + 2] = static_cast<unsigned char>(b);
    };

    int base = 30 + static_cast<int>(rng.below(41));  // dim gray background
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) put(x, y, base, base, base);

    // muted gray clutter dots; they carry no color signal
    int dots = 8 + static_cast<int>(rng.below(8));
    for (int d = 0; d < dots; ++d) {
        int v = 90 + static_cast<int>(rng.below(50));
        int cx = static_cast<int>(rng.below(size));
        int cy = static_cast<int>(rng.below(size));
        int r = static_cast<int>(rng.below(2));
        for (int y = std::max(0, cy - r); y <= std::min(size - 1, cy + r); ++y)
            for (int x = std::max(0, cx - r); x <= std::min(size - 1, cx + r); ++x) put(x, y, v, v, v);
    }

    // class blob: color x shape in the class quadrant
    int quadrant = synthetic_quadrant(label);
    Rgb color = kPalette[label % 5];
    bool disc = (label / 5) % 2 == 1 || label % 2 == 1;
    int half = size / 2;
    int qx = (quadrant % 2) * half;
    int qy = (quadrant / 2) * half;

    int rmin = std::max(2, size / 10);
    int rmax = std::max(rmin + 1, size / 6);
    int radius = rmin + static_cast<int>(rng.below(rmax - rmin + 1));
    int cx = qx + radius + 1 + static_cast<int>(rng.below(std::max(1, half - 2 * radius - 2)));
    int cy = qy + radius + 1 + static_cast<int>(rng.below(std::max(1, half - 2 * radius - 2)));

    for (int y = cy - radius; y <= cy + radius; ++y) {
        for (int x = cx - radius; x <= cx + radius; ++x) {
            if (x < 0 || x >= size || y < 0 || y >= size) continue;
            if (disc) {
                int dx = x - cx, dy = y - cy;
                if (dx * dx + dy * dy > radius * radius) continue;
            }
            put(x, y, color.r, color.g, color.b);
        }
    }
    if (box) *box = {cx - radius, cy - radius, cx + radius + 1, cy + radius + 1};
}

}  // namespace

Manifest generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
    spec.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    S3L_CHECK(!ec && fs::is_directory(out_dir), "generate_synthetic: cannot create ",
              out_dir.string());

    SeededRng root(spec.seed);
    Manifest m;
    m.root = out_dir;
    static const char* kShapeName[2] = {"square", "disc"};
    static const char* kColorName[5] = {"red", "green", "blue", "yellow", "magenta"};
    for (int c = 0; c < spec.classes; ++c) {
        bool disc = (c / 5) % 2 == 1 || c % 2 == 1;
        m.class_names.push_back(std::string(kShapeName[disc ? 1 : 0]) + "_" + kColorName[c % 5] +
                                "_q" + std::to_string(synthetic_quadrant(c)));
        fs::create_directories(out_dir / ("class_" + std::to_string(c)), ec);
    }

    std::vector<unsigned char> px(static_cast<size_t>(spec.image_size) * spec.image_size * 3);
    for (int c = 0; c < spec.classes; ++c) {
        for (int split = 0; split < 2; ++split) {
            int count = split == 0 ? spec.per_class_train : spec.per_class_test;
            for (int i = 0; i < count; ++i) {
                SeededRng rng = root.stream("synth-image", {static_cast<uint64_t>(c),
                                                            static_cast<uint64_t>(split),
                                                            static_cast<uint64_t>(i)});
                Box box;
                render_synthetic(px, spec.image_size, c, rng, &box);
                std::string rel = "class_" + std::to_string(c) + "/" +
                                  (split == 0 ? "train_" : "test_") + std::to_string(i) + ".ppm";
                std::ofstream out(out_dir / rel, std::ios::binary | std::ios::trunc);
                S3L_CHECK(out.good(), "generate_synthetic: cannot write ", rel);
                out << "P6\n" << spec.image_size << " " << spec.image_size << "\n255\n";
                out.write(reinterpret_cast<const char*>(px.data()),
                          static_cast<std::streamsize>(px.size()));
                ManifestRecord r;
                r.path = rel;
                r.label = c;
                r.split = split == 0 ? Split::Train : Split::Test;
                r.box = box;
                m.records.push_back(std::move(r));
            }
        }
    }
    save_manifest(m, out_dir / "manifest.csv");
    return m;
}

Manifest subsample(const Manifest& manifest, int64_t n_images, uint64_t seed) {
    auto train = manifest.indices(Split::Train);
    S3L_CHECK(n_images >= 0 && n_images <= static_cast<int64_t>(train.size()),
              "subsample: n (", n_images, ") exceeds train size (", train.size(), ")");
    SeededRng rng(seed);
    SeededRng stream = rng.stream("subsample");
    stream.shuffle(train);
    train.resize(static_cast<size_t>(n_images));
    std::sort(train.begin(), train.end());

    Manifest out;
    out.root = manifest.root;
    out.class_names = manifest.class_names;
    for (size_t idx : train) out.records.push_back(manifest.records[idx]);
    for (const auto& r : manifest.records)
        if (r.split == Split::Test) out.records.push_back(r);
    return out;
}

InMemoryDataset InMemoryDataset::load(const Manifest& manifest) {
    InMemoryDataset ds;
    ds.num_classes = manifest.num_classes();
    for (size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        ds.images.push_back(decode_image(manifest.root / r.path));
        ds.labels.push_back(r.label);
        ds.boxes.push_back(r.box);
        (r.split == Split::Train ? ds.train_indices : ds.test_indices).push_back(i);
    }
    return ds;
}

}  // namespace s3l
