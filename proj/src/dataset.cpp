#include "thermogyro/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "thermogyro/csv.hpp"
#include "thermogyro/errors.hpp"

namespace fs = std::filesystem;

namespace tg {

std::vector<std::pair<int, int>> Acquisition::segments() const {
    std::vector<std::pair<int, int>> segs;
    const int n = static_cast<int>(records.size());
    int start = 0;
    for (int i = 1; i <= n; ++i) {
        if (i == n || records[i].label_deg_s != records[start].label_deg_s) {
            segs.emplace_back(start, i);
            start = i;
        }
    }
    return segs;
}

std::vector<int> DatasetRoot::indices_of_environment(const std::string& env) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(acquisitions.size()); ++i) {
        if (acquisitions[i].environment == env) out.push_back(i);
    }
    return out;
}

void write_acquisition(const Acquisition& acq, const std::string& path) {
    std::string buf;
    buf.reserve(acq.records.size() * kFramePixels * 8 + 8192);
    buf += "idx,label_deg_s,gyro_deg_s";
    for (int p = 0; p < kFramePixels; ++p) {
        char cell[8];
        std::snprintf(cell, sizeof(cell), ",p%03d", p);
        buf += cell;
    }
    buf += '\n';
    for (std::size_t i = 0; i < acq.records.size(); ++i) {
        const Record& r = acq.records[i];
        buf += std::to_string(i);
        buf += ',';
        append_double(buf, r.label_deg_s);
        buf += ',';
        append_double(buf, r.gyro_deg_s);
        for (double px : r.frame.pixels) {
            buf += ',';
            append_double(buf, px);
        }
        buf += '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open acquisition file for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("failed writing acquisition file: " + path);
}

Acquisition load_acquisition(const std::string& path, const std::string& environment, double fps) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open acquisition file: " + path);

    Acquisition acq;
    acq.environment = environment;
    acq.name = fs::path(path).stem().string();
    acq.fps = fps;

    auto fail = [&path](std::size_t line_no, const std::string& why) -> DataError {
        return DataError(path + ":" + std::to_string(line_no) + ": " + why);
    };

    std::string line;
    if (!std::getline(in, line)) throw fail(1, "empty file (missing header row)");
    {
        const auto cells = split_line(line);
        if (cells.size() != 3 + kFramePixels || cells[0] != "idx" || cells[1] != "label_deg_s" ||
            cells[2] != "gyro_deg_s")
            throw fail(1, "bad header row (expected idx,label_deg_s,gyro_deg_s,p000..p767)");
    }

    std::size_t line_no = 1;
    long expected_idx = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() && in.eof()) break;
        const auto cells = split_line(line);
        if (cells.size() != 3 + kFramePixels)
            throw fail(line_no, "expected " + std::to_string(3 + kFramePixels) + " columns, got " +
                                    std::to_string(cells.size()));
        Record rec;
        try {
            const long idx = parse_long(cells[0]);
            if (idx != expected_idx)
                throw std::invalid_argument("index " + std::to_string(idx) + " out of order (expected " +
                                            std::to_string(expected_idx) + ")");
            rec.label_deg_s = parse_double(cells[1]);
            rec.gyro_deg_s = parse_double(cells[2]);
            for (int p = 0; p < kFramePixels; ++p) rec.frame.pixels[p] = parse_double(cells[3 + p]);
        } catch (const std::invalid_argument& e) {
            throw fail(line_no, e.what());
        }
        if (!(rec.label_deg_s >= -kSpeedScaleDegS && rec.label_deg_s <= kSpeedScaleDegS))
            throw fail(line_no, "label " + format_double(rec.label_deg_s) + " outside [-200, 200] deg/s");
        acq.records.push_back(std::move(rec));
        ++expected_idx;
    }
    if (acq.records.empty()) throw fail(1, "acquisition has no records");
    return acq;
}

void write_manifest(const DatasetRoot& root, const std::string& dir) {
    // Group acquisitions by environment, preserving first-seen order.
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    std::vector<std::string> order;
    for (const auto& a : root.acquisitions) {
        bool seen = false;
        for (const auto& e : order) seen = seen || e == a.environment;
        if (!seen) order.push_back(a.environment);
    }
    for (const auto& env : order) {
        nlohmann::ordered_json entry;
        entry["environment"] = env;
        double fps = 8.0;
        nlohmann::ordered_json files = nlohmann::ordered_json::array();
        for (const auto& a : root.acquisitions) {
            if (a.environment != env) continue;
            files.push_back(a.name + ".csv");
            fps = a.fps;
        }
        entry["fps"] = fps;
        entry["files"] = files;
        manifest.push_back(entry);
    }
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!out) throw DataError("cannot write manifest.json in " + dir);
    out << manifest.dump(2) << '\n';
}

DatasetRoot load_dataset(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw DataError("no manifest.json in dataset root: " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest.json in " + dir + ": " + e.what());
    }
    if (!manifest.is_array()) throw DataError("manifest.json must be an array of environments: " + dir);

    DatasetRoot root;
    for (const auto& entry : manifest) {
        const std::string env = entry.at("environment").get<std::string>();
        const double fps = entry.at("fps").get<double>();
        if (fps <= 0.0) throw DataError("manifest fps must be > 0 for environment " + env);
        for (const auto& f : entry.at("files")) {
            const fs::path p = fs::path(dir) / f.get<std::string>();
            root.acquisitions.push_back(load_acquisition(p.string(), env, fps));
        }
    }
    return root;
}

Tensor subsample_frame(const ThermalFrame& frame, int factor) {
    if (factor < 1 || factor > 3)
        throw std::invalid_argument("subsample factor must be in {1,2,3}, got " + std::to_string(factor));
    const int oh = kFrameRows / factor;
    const int ow = kFrameCols / factor;
    Tensor out({oh, ow});
    const double inv = 1.0 / (factor * factor);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) acc += frame.at(y * factor + dy, x * factor + dx);
            out.at(y, x) = acc * inv;
        }
    }
    return out;
}

void normalize_frame(Tensor& frame, double std_floor) {
    const std::size_t n = frame.size();
    double mean = 0.0;
    for (double v : frame.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : frame.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::max(std::sqrt(var), std_floor);
    for (double& v : frame.data) v = (v - mean) / sd;
}

double gyro_average(std::span<const double> gyro_readings_deg_s) {
    if (gyro_readings_deg_s.empty()) throw std::invalid_argument("gyro_average: empty window");
    double sum = 0.0;
    for (double g : gyro_readings_deg_s) sum += g;
    return sum / static_cast<double>(gyro_readings_deg_s.size());
}

double denormalize_speed(double normalized) { return normalized * kSpeedScaleDegS; }

std::vector<Sample> make_windows(const Acquisition& acq, int n_frames, int subsample,
                                 const NormalizationSpec& norm, int acq_index) {
    if (n_frames < 1) throw std::invalid_argument("make_windows: n_frames must be >= 1");
    const int h = kFrameRows / subsample;
    const int w = kFrameCols / subsample;
    std::vector<Sample> samples;
    for (const auto& [seg_begin, seg_end] : acq.segments()) {
        const int last_start = seg_end - n_frames;
        for (int start = seg_begin; start <= last_start; ++start) {
            Sample s;
            s.frames = Tensor({n_frames, h, w});
            double gyro_sum = 0.0;
            for (int k = 0; k < n_frames; ++k) {
                const Record& rec = acq.records[static_cast<std::size_t>(start + k)];
                Tensor ch = subsample_frame(rec.frame, subsample);
                normalize_frame(ch, norm.std_floor);
                std::copy(ch.data.begin(), ch.data.end(),
                          s.frames.data.begin() + static_cast<std::ptrdiff_t>(k) * h * w);
                gyro_sum += rec.gyro_deg_s;
            }
            s.gyro_speed = (gyro_sum / n_frames) / norm.speed_scale;
            s.label = acq.records[static_cast<std::size_t>(start)].label_deg_s / norm.speed_scale;
            s.acq_index = acq_index;
            s.start = start;
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

std::vector<Sample> make_windows(const DatasetRoot& root, int n_frames, int subsample,
                                 const NormalizationSpec& norm, const std::vector<int>& only) {
    std::vector<int> idx = only;
    if (idx.empty()) {
        idx.resize(root.acquisitions.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    }
    std::vector<Sample> all;
    for (int i : idx) {
        auto part = make_windows(root.acquisitions[static_cast<std::size_t>(i)], n_frames, subsample,
                                 norm, i);
        for (auto& s : part) all.push_back(std::move(s));
    }
    return all;
}

} // namespace tg
