#include "fslam/io/trajectory.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fslam {

void write_trajectory_tum(const Trajectory& trajectory, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("trajectory: cannot open " + path + " for writing");
    out << "# timestamp tx ty tz qx qy qz qw\n";
    char line[512];
    for (const TimedPose& tp : trajectory) {
        const Pose c2w = se3_inverse(tp.pose);
        const Eigen::Quaterniond q = c2w.rotation.normalized();
        // 17 significant digits make parse(print(x)) exact for doubles.
        std::snprintf(line, sizeof(line), "%.6f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      tp.timestamp, c2w.translation.x(), c2w.translation.y(), c2w.translation.z(),
                      q.x(), q.y(), q.z(), q.w());
        out << line;
    }
    if (!out) throw std::runtime_error("trajectory: write failed for " + path);
}

Trajectory read_trajectory_tum(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("trajectory: cannot open " + path);
    Trajectory out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            throw std::runtime_error("trajectory: malformed line in " + path + ": " + line);
        Pose c2w;
        c2w.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
        c2w.translation = {tx, ty, tz};
        out.push_back({t, se3_inverse(c2w)});
    }
    return out;
}

}  // namespace fslam
