fn main() {
    println!("ordbo");
}
