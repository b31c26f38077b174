//! Prints the five-variable example network as JSON.

fn main() {
    println!("{}", bpnet::gen::rain5().to_json_string());
}
