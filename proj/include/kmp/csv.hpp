#pragma once

#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace kmp {

/// Minimal CSV writer; floating values carry 17 significant digits so a
/// written table round-trips exactly.
class CsvWriter {
  public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    void header(const std::vector<std::string>& columns) {
        for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
        os_ << '\n';
    }

    template <class... Ts>
    void row(const Ts&... values) {
        bool first = true;
        ((write_cell(values, first)), ...);
        os_ << '\n';
    }

    static std::string format(double v) {
        std::ostringstream s;
        s << std::setprecision(17) << v;
        return s.str();
    }

  private:
    template <class T>
    void write_cell(const T& v, bool& first) {
        if (!first) os_ << ',';
        first = false;
        if constexpr (std::is_floating_point_v<T>) {
            os_ << format(v);
        } else {
            os_ << v;
        }
    }

    std::ostream& os_;
};

}  // namespace kmp
