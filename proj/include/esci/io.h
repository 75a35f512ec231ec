#ifndef ESCI_IO_H_
#define ESCI_IO_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace esci {

// Whole-file helpers. The path "-" means stdin / stdout.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

std::vector<std::string_view> split(std::string_view line, char sep);

// Lines without their terminators; a trailing empty line is dropped.
std::vector<std::string_view> split_lines(std::string_view contents);

// Shortest representation that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view what);

}  // namespace esci

#endif  // ESCI_IO_H_
